"""Config files, training/evaluation runs, hyper-parameter sweeps and reports.

All configs are JSON objects.  Unknown keys are rejected so that a typo
cannot silently fall back to a default.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .data import SPLITS, CorpusSpec, generate, load_corpus
from .exceptions import ConfigError, TransducerError
from .metrics import DEFAULT_FRAME_MS, evaluate
from .model import load_checkpoint, save_checkpoint
from .training import SCHEMES, TrainConfig, train

log = logging.getLogger(__name__)

CURVE_SCHEMA = "# rnnt-delay curve v1"
REPORT_SCHEMA = "# rnnt-delay report v1"
CURVE_COLUMNS = ("step", "loss", "dev_mean_delay_frames", "dev_wer")
REPORT_COLUMNS = ("scheme", "hyper", "mean_delay_ms", "rms_delay_ms", "wer",
                  "matched_word_fraction")
FAILED = "FAILED"

DEFAULT_GRIDS = {
    "constrained": [2, 4, 8, None],
    "fastemit": [0.0, 0.003, 0.01, 0.03, 0.1],
    "selfalign": [0.0, 0.003, 0.01, 0.03, 0.1],
}
HYPER_KEY = {"constrained": "sigma", "fastemit": "lambda_fe", "selfalign": "lambda_sa"}
MATCH_WER = 0.005


# --- config files -----------------------------------------------------------

def read_json(path) -> dict:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return obj


def _check_keys(cfg, allowed, what):
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {what} keys: {', '.join(unknown)}")


def _resolve(path, base_dir):
    p = Path(path)
    return p if p.is_absolute() or base_dir is None else Path(base_dir) / p


def corpus_from_config(cfg: dict, base_dir=None) -> dict:
    """``corpus`` names a directory of split files; ``corpus_spec`` generates one."""
    if "corpus" in cfg and "corpus_spec" in cfg:
        raise ConfigError("give either 'corpus' or 'corpus_spec', not both")
    if "corpus" in cfg:
        root = _resolve(cfg["corpus"], base_dir)
        if not root.is_dir():
            raise ConfigError(f"corpus directory not found: {root}")
        return load_corpus(root)
    spec = CorpusSpec.from_dict(cfg.get("corpus_spec") or {})
    return generate(spec)


# --- train / eval -----------------------------------------------------------

TRAIN_KEYS = {f for f in TrainConfig.__dataclass_fields__} | {"corpus", "corpus_spec"}
EVAL_KEYS = {"checkpoint", "corpus", "corpus_spec", "split", "frame_ms",
             "max_symbols_per_frame", "limit"}
SWEEP_KEYS = {"corpus", "corpus_spec", "train", "schemes", "grids", "frame_ms", "split",
              "limit", "reuse_neutral", "parallel_cells", "match_wer"}


def train_config_from(cfg: dict, seed=None, threads=None) -> TrainConfig:
    fields = {k: v for k, v in cfg.items() if k not in ("corpus", "corpus_spec")}
    if seed is not None:
        fields["seed"] = seed
    if threads is not None:
        fields["threads"] = threads
    return TrainConfig.from_dict(fields)


def format_float(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.6f}"


def format_hyper(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    if isinstance(value, float) and value.is_integer() and value != 0:
        return str(int(value))
    return repr(value) if isinstance(value, float) else str(value)


def curve_csv(curve) -> str:
    buf = io.StringIO()
    buf.write(CURVE_SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for row in curve:
        w.writerow([row["step"], format_float(row["loss"]),
                    format_float(row["dev_mean_delay_frames"]), format_float(row["dev_wer"])])
    return buf.getvalue()


def read_curve_csv(path):
    with open(path, encoding="utf-8") as fh:
        lines = [l for l in fh if not l.startswith("#")]
    rows = list(csv.DictReader(lines))
    return [{"step": int(r["step"]), "loss": float(r["loss"]),
             "dev_mean_delay_frames": float(r["dev_mean_delay_frames"]),
             "dev_wer": float(r["dev_wer"])} for r in rows]


def report_row(scheme, hyper, report) -> list:
    return [scheme, format_hyper(hyper), format_float(report.mean_delay_ms),
            format_float(report.rms_delay_ms), format_float(report.wer),
            format_float(report.matched_word_fraction)]


def failed_row(scheme, hyper) -> list:
    return [scheme, format_hyper(hyper)] + [FAILED] * 4


def report_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(REPORT_SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    w.writerows(rows)
    return buf.getvalue()


def read_report_csv(path):
    """Rows as dicts; metric fields are floats, or None for FAILED cells."""
    with open(path, encoding="utf-8") as fh:
        lines = [l for l in fh if not l.startswith("#")]
    out = []
    for r in csv.DictReader(lines):
        rec = {"scheme": r["scheme"], "hyper": r["hyper"]}
        for k in REPORT_COLUMNS[2:]:
            rec[k] = None if r[k] == FAILED else float(r[k])
        out.append(rec)
    return out


def run_train(cfg: dict, out_dir, base_dir=None, seed=None, threads=None):
    """Train one model; writes ``checkpoint.npz`` and ``curve.csv`` under ``out_dir``."""
    _check_keys(cfg, TRAIN_KEYS, "train config")
    tcfg = train_config_from(cfg, seed, threads)
    corpus = corpus_from_config(cfg, base_dir)
    out_dir = Path(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    params, curve = train(corpus["train"], corpus["dev"], tcfg)
    save_checkpoint(out_dir / "checkpoint.npz", params, tcfg.to_dict())
    (out_dir / "curve.csv").write_text(curve_csv(curve), encoding="utf-8")
    return params, curve


def run_eval(cfg: dict, base_dir=None):
    """Evaluate a checkpoint; returns the CSV text of a one-row report."""
    _check_keys(cfg, EVAL_KEYS, "eval config")
    if "checkpoint" not in cfg:
        raise ConfigError("eval config needs 'checkpoint'")
    ckpt = _resolve(cfg["checkpoint"], base_dir)
    try:
        params, tdict = load_checkpoint(ckpt)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    split = cfg.get("split", "test")
    if split not in SPLITS:
        raise ConfigError(f"split must be one of {SPLITS}")
    utts = corpus_from_config(cfg, base_dir)[split]
    if cfg.get("limit") is not None:
        utts = utts[:cfg["limit"]]
    tcfg = TrainConfig.from_dict(tdict) if tdict else TrainConfig()
    report = evaluate(params, utts, cfg.get("frame_ms", DEFAULT_FRAME_MS),
                      cfg.get("max_symbols_per_frame", tcfg.max_symbols_per_frame),
                      tcfg.boundary_id)
    return report_csv([report_row(tcfg.scheme, tcfg.hyper, report)]), report


# --- sweeps -----------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    scheme: str
    hyper: object
    config: TrainConfig

    @property
    def neutral(self):
        return self.config.is_neutral


def sweep_cells(scfg: dict, base: TrainConfig):
    schemes = scfg.get("schemes", ["constrained", "fastemit", "selfalign"])
    grids = dict(DEFAULT_GRIDS)
    grids.update(scfg.get("grids", {}))
    _check_keys(grids, DEFAULT_GRIDS, "grids")
    cells = []
    for scheme in schemes:
        if scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {scheme!r}")
        if scheme == "baseline":
            cells.append(Cell("baseline", None, replace(base, scheme="baseline")))
            continue
        for h in grids[scheme]:
            if scheme == "constrained" and h is not None and math.isinf(float(h)):
                h = None
            kw = {"scheme": scheme, HYPER_KEY[scheme]: h}
            cfg = replace(base, **kw)
            cells.append(Cell(scheme, cfg.hyper, cfg))
    return cells


def mid_grid(scheme, grid):
    """The grid entry at index ``len // 2`` (grids listed weakest to strongest)."""
    return grid[len(grid) // 2]


def _run_cell(args):
    cfg, corpus, frame_ms, split, limit = args
    try:
        params, curve = train(corpus["train"], corpus["dev"], cfg)
        utts = corpus[split] if limit is None else corpus[split][:limit]
        report = evaluate(params, utts, frame_ms, cfg.max_symbols_per_frame, cfg.boundary_id)
        return report, curve, None
    except (TransducerError, FloatingPointError) as exc:
        return None, None, f"{type(exc).__name__}: {exc}"


def run_sweep(scfg: dict, out_dir, base_dir=None, seed=None, threads=None, echo=None):
    """Train and evaluate every grid cell; rows are flushed to ``sweep.csv`` as they finish.

    Neutral cells (sigma = inf, lambda = 0) train exactly the baseline, so with
    ``reuse_neutral`` one baseline run serves all of them.
    """
    _check_keys(scfg, SWEEP_KEYS, "sweep config")
    base = train_config_from(scfg.get("train", {}), seed, threads)
    corpus = corpus_from_config(scfg, base_dir)
    frame_ms = scfg.get("frame_ms", DEFAULT_FRAME_MS)
    split = scfg.get("split", "test")
    if split not in SPLITS:
        raise ConfigError(f"split must be one of {SPLITS}")
    limit = scfg.get("limit")
    reuse = scfg.get("reuse_neutral", True)
    workers = int(scfg.get("parallel_cells", 1))
    cells = sweep_cells(scfg, base)

    out_dir = Path(out_dir)
    (out_dir / "curves").mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "sweep.csv"

    # unique training jobs, in row order
    def job_key(cell):
        if reuse and cell.neutral:
            return ("neutral",)
        return (cell.scheme, format_hyper(cell.hyper))
    jobs = {}
    for cell in cells:
        k = job_key(cell)
        if k not in jobs:
            cfg = replace(cell.config, scheme="baseline") if k == ("neutral",) else cell.config
            jobs[k] = cfg
    keys = list(jobs)
    args = [(jobs[k], corpus, frame_ms, split, limit) for k in keys]

    results = {}
    rows = []
    written = 0

    def flush():
        nonlocal written
        while written < len(cells) and job_key(cells[written]) in results:
            cell = cells[written]
            report, curve, err = results[job_key(cell)]
            if report is None:
                row = failed_row(cell.scheme, cell.hyper)
                log.warning("cell %s %s failed: %s", cell.scheme, format_hyper(cell.hyper), err)
            else:
                row = report_row(cell.scheme, cell.hyper, report)
                name = f"{cell.scheme}_{format_hyper(cell.hyper) or 'none'}.csv"
                (out_dir / "curves" / name).write_text(curve_csv(curve), encoding="utf-8")
            rows.append(row)
            written += 1
            csv_path.write_text(report_csv(rows), encoding="utf-8")
            if echo is not None:
                echo(",".join(row))

    csv_path.write_text(report_csv([]), encoding="utf-8")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for k, res in zip(keys, pool.map(_run_cell, args)):
                results[k] = res
                flush()
    else:
        for k, a in zip(keys, args):
            results[k] = _run_cell(a)
            flush()

    parsed = read_report_csv(csv_path)
    check = pareto_check(parsed, scfg.get("match_wer", MATCH_WER), frame_ms)
    (out_dir / "pareto.txt").write_text(check.text(), encoding="utf-8")
    return parsed, check


# --- Pareto ordering ----------------------------------------------------------

def _is_neutral(row):
    h = row["hyper"]
    if row["scheme"] == "baseline":
        return True
    if row["scheme"] == "constrained":
        return h in ("", "inf")
    return float(h) == 0.0


@dataclass
class ParetoCheck:
    match_wer: float
    triples: list        # (sa, fe, c) row dicts within match_wer of each other
    ordered: list        # triples with sa <= fe <= c
    sa_le_c: list        # triples with sa <= c
    tie_flagged: bool

    @property
    def status(self):
        if self.ordered:
            return "PASS"
        if self.sa_le_c and self.tie_flagged:
            return "PASS (fastemit/selfalign tie flagged)"
        return "FAIL" if self.triples else "FAIL (no matched-WER triple)"

    @property
    def passed(self):
        return self.status.startswith("PASS")

    def text(self):
        lines = [f"matched-WER window: +/-{self.match_wer * 100:.2f}% absolute "
                 f"(neutral cells excluded)",
                 f"matched triples: {len(self.triples)}",
                 f"selfalign <= fastemit <= constrained: {len(self.ordered)}",
                 f"selfalign <= constrained: {len(self.sa_le_c)}"]
        show = self.ordered or self.sa_le_c or self.triples
        for sa, fe, c in show[:5]:
            lines.append("  " + "  ".join(
                f"{r['scheme']}({r['hyper']}): {r['mean_delay_ms']:.1f}ms wer={r['wer'] * 100:.2f}%"
                for r in (sa, fe, c)))
        if self.tie_flagged:
            lines.append("TIE: the sweep does not separate fastemit from selfalign")
        lines.append(f"pareto ordering: {self.status}")
        return "\n".join(lines) + "\n"


def pareto_check(rows, match_wer=MATCH_WER, frame_ms=DEFAULT_FRAME_MS) -> ParetoCheck:
    """Search matched-WER (selfalign, fastemit, constrained) triples for the delay ordering."""
    ok = [r for r in rows if r["mean_delay_ms"] is not None and r["wer"] is not None
          and math.isfinite(r["mean_delay_ms"]) and not _is_neutral(r)]
    by = {s: [r for r in ok if r["scheme"] == s] for s in ("selfalign", "fastemit", "constrained")}
    eps = 1e-12
    triples = []
    for sa in by["selfalign"]:
        for fe in by["fastemit"]:
            for c in by["constrained"]:
                w = (sa["wer"], fe["wer"], c["wer"])
                if max(w) - min(w) <= match_wer + eps:
                    triples.append((sa, fe, c))
    ordered = [t for t in triples
               if t[0]["mean_delay_ms"] <= t[1]["mean_delay_ms"] <= t[2]["mean_delay_ms"]]
    sa_le_c = [t for t in triples if t[0]["mean_delay_ms"] <= t[2]["mean_delay_ms"]]
    tie = not ordered and bool(sa_le_c)
    return ParetoCheck(match_wer, triples, ordered, sa_le_c, tie)
