"""Command-line harness: ``rnnt-delay {gen,train,eval,sweep,oracle}``.

Exit codes: 0 success, 1 oracle failure (or every sweep cell failed),
2 bad config / spec / input files, 3 diverged training.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import experiment, oracle
from .data import CorpusSpec, generate, save_corpus
from .exceptions import ConfigError, DivergedLoss, InvalidSpec, ParseError

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_DIVERGED = 0, 1, 2, 3
FAULT_ENV = "RNNT_DELAY_ORACLE_FAULT"


def _config(args, required=False):
    if args.config is None:
        if required:
            raise ConfigError(f"'{args.command}' needs --config")
        return {}, None
    return experiment.read_json(args.config), Path(args.config).parent


def cmd_gen(args):
    cfg, _ = _config(args)
    if args.seed is not None:
        cfg["seed"] = args.seed
    spec = CorpusSpec.from_dict(cfg)
    corpus = generate(spec)
    save_corpus(corpus, args.out or "corpus")
    print(" ".join(f"{k}={len(v)}" for k, v in corpus.items()))
    return EXIT_OK


def cmd_train(args):
    cfg, base = _config(args)
    out = Path(args.out or "run")
    _, curve = experiment.run_train(cfg, out, base, args.seed, args.threads)
    last = curve[-1] if curve else None
    if last:
        print(f"step={last['step']} loss={last['loss']:.4f} "
              f"dev_mean_delay_frames={last['dev_mean_delay_frames']:.3f} "
              f"dev_wer={last['dev_wer']:.4f}")
    print(f"wrote {out / 'checkpoint.npz'} and {out / 'curve.csv'}")
    return EXIT_OK


def cmd_eval(args):
    cfg, base = _config(args, required=True)
    text, _ = experiment.run_eval(cfg, base)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep(args):
    cfg, base = _config(args)
    out = Path(args.out or "sweep")
    rows, check = experiment.run_sweep(cfg, out, base, args.seed, args.threads, echo=print)
    sys.stdout.write(check.text())
    if rows and all(r["wer"] is None for r in rows):
        print("every sweep cell failed", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_oracle(args):
    fault = os.environ.get(FAULT_ENV)
    with np.errstate(all="ignore"):
        if fault:
            with oracle.inject_fault(fault):
                results = oracle.run_all(echo=print)
        else:
            results = oracle.run_all(echo=print)
    ok = all(r.passed for r in results)
    print("oracle: all suites pass" if ok else "oracle: FAILED")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval,
            "sweep": cmd_sweep, "oracle": cmd_oracle}


def build_parser():
    p = argparse.ArgumentParser(prog="rnnt-delay",
                                description="Transducer delay regularization experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {"gen": "generate a synthetic corpus",
             "train": "train one model and write its checkpoint and curve",
             "eval": "evaluate a checkpoint: one delay/WER CSV row",
             "sweep": "train and evaluate every scheme over its hyper-parameter grid",
             "oracle": "run the brute-force and finite-difference self-checks"}
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", help="output directory (eval: output CSV file)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--threads", type=int, help="worker threads per batch")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DivergedLoss as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, InvalidSpec, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
