"""End-to-end acceptance criteria.

Each test records one PASS/FAIL line, printed in the terminal summary under
"acceptance criteria".  Criteria 6 to 8 share one default sweep (about ten
minutes on one core).
"""

import math
import time

import numpy as np
import pytest
from scipy.special import logsumexp

from conftest import ACCEPTANCE_LINES
from rnnt_delay import cli, experiment, oracle
from rnnt_delay import lattice as lat
from rnnt_delay import regularizers as reg
from rnnt_delay.align import viterbi, viterbi_with_score
from rnnt_delay.data import CorpusSpec, generate
from rnnt_delay.exceptions import AllPathsMasked
from rnnt_delay.lattice import enumerate_paths, random_lattice
from rnnt_delay.metrics import mean_delay, rms_delay
from rnnt_delay.training import TrainConfig, train

FRAME_MS = 30.0


def record(n, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def random_shape(rng, min_V=2):
    return int(rng.integers(1, 9)), int(rng.integers(0, 5)), int(rng.integers(min_V, 6))


# --- 1. lattice oracle ----------------------------------------------------------

def test_c01_lattice_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_total = worst_cut = 0.0
    n = 250
    for _ in range(n):
        T, U, V = random_shape(rng)
        L = random_lattice(T, U, V, rng)
        alpha, beta = lat.forward(L), lat.backward(L)
        total = alpha[T, U]
        worst_total = max(worst_total, abs(total - logsumexp([lp for _, lp in enumerate_paths(L)])))
        blank = L.blank_logp()
        for t in range(T):
            worst_cut = max(worst_cut, abs(logsumexp(alpha[t] + blank[t] + beta[t + 1]) - total))
    secs = time.perf_counter() - t0
    record(1, "lattice oracle", worst_total < 1e-8 and worst_cut < 1e-8 and secs < 10,
           f"{n} lattices, max|fwd-enum|={worst_total:.1e}, max cut err={worst_cut:.1e}, "
           f"{secs:.1f}s (limits 1e-8, 10s)")


# --- 2. gradients -----------------------------------------------------------------

def test_c02_gradients():
    t0 = time.perf_counter()
    lattice_res = oracle.gradient_suite()
    model_res = oracle.model_gradient_suite()
    secs = time.perf_counter() - t0
    record(2, "gradient suite",
           lattice_res.max_error < 1e-5 and model_res.max_error < 1e-4 and secs < 60,
           f"lattice max rel err={lattice_res.max_error:.1e} (<1e-5), "
           f"model max rel err={model_res.max_error:.1e} (<1e-4), {secs:.1f}s (<60s)")


# --- 3. neutral reductions --------------------------------------------------------

def test_c03_neutral_reductions():
    res = oracle.neutral_suite(n=150)
    corpus = generate(CorpusSpec(num_train=48, num_dev=8, num_test=0))
    base = TrainConfig(n_epochs=2, eval_interval=3)
    runs = {}
    for kw in ({}, {"scheme": "constrained", "sigma": None},
               {"scheme": "fastemit", "lambda_fe": 0.0},
               {"scheme": "selfalign", "lambda_sa": 0.0}):
        cfg = TrainConfig(**{**base.to_dict(), **kw})
        runs[cfg.scheme] = train(corpus["train"], corpus["dev"], cfg)
    p0, c0 = runs["baseline"]
    identical = all(c == c0 and all(np.array_equal(p.weights[k], p0.weights[k]) for k in p0.weights)
                    for p, c in runs.values())
    record(3, "neutral reductions", res.max_error < 1e-10 and identical,
           f"max loss/grad diff={res.max_error:.1e} over {res.cases} lattice cases (<1e-10); "
           f"training curves+weights bit-identical={identical}")


# --- 4. constrained oracle --------------------------------------------------------

def test_c04_constrained_oracle():
    rng = np.random.default_rng(104)
    worst, wrong, empty = 0.0, 0, 0
    n = 400
    for _ in range(n):
        T, U, V = random_shape(rng, min_V=3)
        labels = rng.integers(2, V, size=U)
        labels[rng.random(U) < 0.5] = 1
        L = random_lattice(T, U, V, rng, labels=labels)
        ref = tuple(np.sort(rng.integers(0, T, size=U)).tolist())
        cfg = reg.ConstrainedConfig(int(rng.integers(0, T + 1)), 1, ref)
        kept = [lp for p, lp in enumerate_paths(L)
                if all(labels[u] != 1 or p.emit_frames[u] < ref[u] + cfg.sigma for u in range(U))]
        empty += not kept
        try:
            got = -reg.constrained_loss(L, cfg).loss
        except AllPathsMasked:
            wrong += bool(kept)
            continue
        if not kept:
            wrong += 1
        else:
            worst = max(worst, abs(got - logsumexp(kept)))
    record(4, "constrained oracle", worst < 1e-8 and wrong == 0 and empty > 0,
           f"{n} instances ({empty} with empty filtered set), max err={worst:.1e} (<1e-8), "
           f"AllPathsMasked mismatches={wrong}")


# --- 5. Viterbi oracle ------------------------------------------------------------

def test_c05_viterbi_oracle():
    rng = np.random.default_rng(105)
    worst = 0.0
    n = 250
    for _ in range(n):
        L = random_lattice(*random_shape(rng), rng)
        _, score = viterbi_with_score(L)
        worst = max(worst, abs(score - max(lp for _, lp in enumerate_paths(L))))
    tie = oracle.tie_lattice()
    tie_scores = {round(lp, 12) for _, lp in enumerate_paths(tie)}
    tie_ok = len(tie_scores) == 1 and viterbi(tie).emit_frames == (0,)
    record(5, "viterbi oracle", worst < 1e-10 and tie_ok,
           f"{n} instances, max|viterbi-enum max|={worst:.1e} (<1e-10); "
           f"tie lattice resolves to earliest emission={tie_ok}")


# --- 6 to 8. default sweep --------------------------------------------------------

@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    t0 = time.perf_counter()
    code = cli.main(["sweep", "--out", str(out), "--seed", "0", "--threads", "1"])
    secs = time.perf_counter() - t0
    assert code == 0
    rows = experiment.read_report_csv(out / "sweep.csv")
    return {"dir": out, "rows": rows, "seconds": secs,
            "by": {(r["scheme"], r["hyper"]): r for r in rows}}


def baseline_row(sweep):
    return sweep["by"][("selfalign", experiment.format_hyper(0.0))]


def test_c06_delay_reduction(sweep):
    base = baseline_row(sweep)
    parts, ok = [], sweep["seconds"] < 30 * 60
    for scheme in ("constrained", "fastemit", "selfalign"):
        h = experiment.mid_grid(scheme, experiment.DEFAULT_GRIDS[scheme])
        r = sweep["by"][(scheme, experiment.format_hyper(h))]
        if r["wer"] is None:
            ok = False
            parts.append(f"{scheme}({h}) FAILED")
            continue
        gain = (base["mean_delay_ms"] - r["mean_delay_ms"]) / FRAME_MS
        dwer = r["wer"] - base["wer"]
        good = gain >= 1.0 and dwer <= 0.05
        ok &= good
        parts.append(f"{scheme}({h}) delay -{gain:.2f}fr wer {dwer * 100:+.1f}% "
                     f"[{'ok' if good else 'X'}]")
    record(6, "delay reduction at mid-grid", ok,
           "; ".join(parts) + f"; baseline {base['mean_delay_ms'] / FRAME_MS:.2f}fr "
           f"wer {base['wer'] * 100:.1f}%; sweep {sweep['seconds'] / 60:.1f} min (<30)")


def test_c07_pareto_ordering(sweep):
    check = experiment.pareto_check(sweep["rows"])
    text = (sweep["dir"] / "pareto.txt").read_text()
    needs_flag = not check.ordered and bool(check.sa_le_c)
    flagged = "TIE" in text if needs_flag else True
    record(7, "pareto ordering at matched WER", check.passed and flagged,
           f"{check.status}; {len(check.triples)} matched triples, {len(check.ordered)} ordered, "
           f"{len(check.sa_le_c)} with selfalign<=constrained")


def test_c08_curve_shape(sweep):
    h = experiment.mid_grid("selfalign", experiment.DEFAULT_GRIDS["selfalign"])
    curve = experiment.read_curve_csv(
        sweep["dir"] / "curves" / f"selfalign_{experiment.format_hyper(h)}.csv")
    d = [r["dev_mean_delay_frames"] for r in curve]
    peak = int(np.argmax(d))
    record(8, "selfalign curve rises then falls", 0 < peak < len(d) - 1,
           f"lambda_sa={h}: peak {d[peak]:.2f}fr at eval {peak + 1}/{len(d)}, "
           f"final {d[-1]:.2f}fr, first {d[0]:.2f}fr")


def test_selfalign_beats_baseline_delay(sweep):
    base = baseline_row(sweep)
    sa = sweep["by"][("selfalign", "0.01")]
    assert sa["mean_delay_ms"] < base["mean_delay_ms"]


def test_baseline_learns_to_wait(sweep):
    curve = experiment.read_curve_csv(sweep["dir"] / "curves" / "selfalign_0.0.csv")
    assert curve[-1]["dev_mean_delay_frames"] > 0


# --- 9. metrics -------------------------------------------------------------------

def test_c09_metrics():
    exact = [
        mean_delay([[5, 8]], [[3, 6]], 30) == 60.0,
        mean_delay([[5, 8]], [[5, 8]], 30) == 0.0,
        mean_delay([[4, 8]], [[3, 5]], 30) == 60.0,
        abs(rms_delay([[4, 8]], [[3, 5]], 30) - 30 * math.sqrt(5)) < 1e-12,
        rms_delay([[4, 6]], [[2, 4]], 30) == abs(mean_delay([[4, 6]], [[2, 4]], 30)),
        mean_delay([[5, 3]], [[3, 5]], 30) == 0.0,
        rms_delay([[5, 3]], [[3, 5]], 30) == 60.0,
    ]
    rng = np.random.default_rng(109)
    jensen = 0
    for _ in range(1000):
        k = int(rng.integers(1, 40))
        ref = rng.integers(0, 200, size=k)
        pred = ref + rng.integers(-30, 31, size=k)
        jensen += rms_delay([pred], [ref]) ** 2 >= mean_delay([pred], [ref]) ** 2
    record(9, "metrics unit checks", all(exact) and jensen == 1000,
           f"{sum(exact)}/{len(exact)} exact examples, rms^2>=mean^2 on {jensen}/1000 vectors")


# --- 10. determinism --------------------------------------------------------------

def test_c10_determinism(tmp_path):
    import json
    spec = {"num_train": 40, "num_dev": 8, "num_test": 8}
    tcfg = {"scheme": "selfalign", "lambda_sa": 0.01, "n_epochs": 2, "eval_interval": 3,
            "corpus_spec": spec}
    scfg = {"corpus_spec": spec, "train": {"n_epochs": 1, "eval_interval": 2},
            "grids": {"constrained": [4, None], "fastemit": [0.0, 0.01], "selfalign": [0.0, 0.01]}}
    (tmp_path / "t.json").write_text(json.dumps(tcfg))
    (tmp_path / "s.json").write_text(json.dumps(scfg))
    for run in ("a", "b"):
        assert cli.main(["train", "--config", str(tmp_path / "t.json"), "--out",
                         str(tmp_path / run / "train"), "--seed", "7", "--threads", "1"]) == 0
        assert cli.main(["sweep", "--config", str(tmp_path / "s.json"), "--out",
                         str(tmp_path / run / "sweep"), "--seed", "7", "--threads", "1"]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    same = [(tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files]
    record(10, "determinism", len(files) >= 10 and all(same),
           f"{sum(same)}/{len(files)} output files byte-identical across two runs (train + sweep)")
