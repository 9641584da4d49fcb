"""Transducer alignment lattices and delay-regularized training.

Lattice forward-backward with a brute-force path oracle, Viterbi forced
alignment, three delay schemes (constrained alignment, FastEmit,
self-alignment), a small recurrent transducer with manual backprop, a
synthetic aligned corpus and delay/WER metrics.
"""

from .align import left_shift, viterbi
from .data import CorpusSpec, Utterance, generate
from .decode import Hypothesis, greedy_decode, wer
from .estimator import StreamingTransducer
from .exceptions import (AllPathsMasked, ConfigError, DivergedLoss, EmptyInput,
                         EmptyReference, InstanceTooLarge, InvalidSpec, ParseError,
                         ShapeMismatch, TransducerError, ZeroProbabilityTarget)
from .lattice import (AlignmentPath, JointLattice, LossResult, backward, enumerate_paths,
                      forward, nll_loss)
from .metrics import DelayReport, evaluate, mean_delay, rms_delay
from .regularizers import (UNBOUNDED, ConstrainedConfig, FastEmitConfig, SelfAlignConfig,
                           constrained_loss, fastemit_loss, selfalign_loss)
from .training import TrainConfig, train

__version__ = "0.1.0"
