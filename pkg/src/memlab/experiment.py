"""Replicate runs of the one-step memorization experiment, sweeps and CSV output.

CSV columns, in order, are given by :data:`CSV_COLUMNS`. Floats are written
with ``repr`` so that identical runs produce byte-identical files (pass
``timing=False`` to blank out the wall-clock ``runtime_ms`` column).

The JSON lemma report written by the CLI has the shape::

    {"config": {...resolved config...},
     "config_hash": "...",
     "assumptions": {"m_le_dq_over_log4d": bool, "q_ge_log4d": bool, "q_le_d": bool},
     "replicates": [{"replicate": r, "seed": s, "error": "", "report": LemmaReport}],
     "passed": bool}

where each ``LemmaReport`` carries one field per measured quantity, a
``decomposition`` list, a ``flags`` object and a ``thresholds`` object.
"""

import csv
import logging
import math
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, ExperimentConfig, assumption_flags, config_hash, resolve_config
from .diagnostics import check_lemmas
from .model import Network, expected_sq_derivative, margins
from .sampling import (
    DATA,
    SIGNS,
    WEIGHTS,
    Dataset,
    derive_stream,
    sample_dataset,
    sample_signs,
    sample_weights,
)
from .training import gradient_step

__all__ = [
    "CSV_COLUMNS",
    "ExperimentResult",
    "ReplicateRow",
    "holdout_indices",
    "lemma_report_document",
    "run_experiment",
    "sample_instance",
    "sweep",
    "write_csv",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "config_hash",
    "seed",
    "replicate",
    "d",
    "q",
    "m",
    "eta",
    "activation",
    "sign_mode",
    "gradient_mode",
    "memorization_rate",
    "min_margin",
    "mean_margin",
    "margin_over_logd",
    "active_count",
    "max_pre_h",
    "pre_h_ratio",
    "spec_norm_eta_G",
    "row_norm_max",
    "gtilde_row_norm_max",
    "runtime_ms",
    "error",
)

_NAN = float("nan")


@dataclass
class ReplicateRow:
    config_hash: str
    seed: int
    replicate: int
    d: int
    q: int
    m: int
    eta: float
    activation: str
    sign_mode: str
    gradient_mode: str
    memorization_rate: float = _NAN
    min_margin: float = _NAN
    mean_margin: float = _NAN
    margin_over_logd: float = _NAN
    active_count: int = -1
    max_pre_h: float = _NAN
    pre_h_ratio: float = _NAN
    spec_norm_eta_G: float = _NAN
    row_norm_max: float = _NAN
    gtilde_row_norm_max: float = _NAN
    runtime_ms: float = _NAN
    error: str = ""
    lemma: object = field(default=None, repr=False)

    def csv_values(self):
        return [_fmt(getattr(self, c)) for c in CSV_COLUMNS]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list

    @property
    def assumptions(self):
        return assumption_flags(self.config)


def _fmt(value):
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def holdout_indices(m, n):
    """``n`` evenly spaced example indices in ``[0, m)`` (fewer if ``m < n``)."""
    if n <= 0 or m <= 0:
        return []
    return sorted(set(int(i) for i in np.linspace(0, m - 1, n).round()))


def sample_instance(seed, replicate, d, q, m, activation, sign_mode="iid", init="haar", dtype=np.float64):
    """Network and dataset of one replicate, from ``derive_stream(seed, replicate)``."""
    stream = derive_stream(seed, replicate)
    W = sample_weights(stream.child(WEIGHTS), q, d, init)
    a = sample_signs(stream.child(SIGNS), q, sign_mode)
    data = sample_dataset(stream.child(DATA), m, d)
    if dtype != np.float64:
        W = W.astype(dtype)
        data = Dataset(data.inputs.astype(dtype), data.labels)
    return Network(W, a, activation), data


def _replicate(cfg, r, chash, lemma_checks, timing):
    start = time.perf_counter()
    row = ReplicateRow(
        config_hash=chash,
        seed=cfg.seed,
        replicate=r,
        d=cfg.d,
        q=cfg.q,
        m=cfg.m,
        eta=cfg.eta,
        activation=cfg.activation.name,
        sign_mode=cfg.sign_mode,
        gradient_mode=cfg.gradient_mode,
    )
    try:
        net, data = sample_instance(
            cfg.seed, r, cfg.d, cfg.q, cfg.m, cfg.activation, cfg.sign_mode, cfg.init, cfg.dtype
        )

        step = gradient_step(net, data, cfg.eta, cfg.gradient_mode)
        post = margins(net.with_weights(step.W_plus), data)
        logd = math.log(cfg.d)
        row.memorization_rate = float(np.count_nonzero(post > 0)) / cfg.m
        row.min_margin = float(post.min())
        row.mean_margin = float(post.mean())
        row.margin_over_logd = row.mean_margin / (logd * expected_sq_derivative(cfg.activation))
        row.active_count = step.active_count

        if lemma_checks:
            report = check_lemmas(
                net,
                data,
                cfg.eta,
                cfg.gradient_mode,
                hold_outs=holdout_indices(cfg.m, cfg.n_holdout),
                G=step.G,
            )
            row.lemma = report
            row.max_pre_h = report.max_pre_h
            row.pre_h_ratio = report.pre_h_over_sqrtlogd
            row.spec_norm_eta_G = report.spec_norm_eta_G
            row.row_norm_max = report.row_norm_max
            row.gtilde_row_norm_max = report.gtilde_row_norm_max
    except Exception as exc:  # recorded in the row, never dropped
        log.debug("replicate %d failed:\n%s", r, traceback.format_exc())
        row.error = f"{type(exc).__name__}: {exc}"
    row.runtime_ms = (time.perf_counter() - start) * 1e3 if timing else 0.0
    return row


def run_experiment(cfg, threads=1, lemma_checks=True, timing=True):
    """Run every replicate of a config; rows come back in replicate order.

    Each replicate ``r`` draws ``W``, ``a`` and the dataset from
    ``derive_stream(seed, r)``, so results do not depend on ``threads``.
    """
    cfg = resolve_config(cfg)
    chash = config_hash(cfg)
    reps = range(cfg.replicates)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda r: _replicate(cfg, r, chash, lemma_checks, timing), reps))
    else:
        rows = [_replicate(cfg, r, chash, lemma_checks, timing) for r in reps]
    return ExperimentResult(cfg, rows)


def sweep(grid, threads=1, lemma_checks=True, timing=True):
    """Rows for every config in ``grid`` (grid order, then replicate order).

    ``grid`` holds :class:`ExperimentConfig` objects or raw dicts. A config
    that fails to parse or resolve contributes a single error row.
    """
    for raw in grid:
        try:
            cfg = raw if isinstance(raw, ExperimentConfig) else ExperimentConfig.from_dict(raw)
            result = run_experiment(cfg, threads, lemma_checks, timing)
        except ConfigError as exc:
            yield _config_error_row(raw, exc)
            continue
        yield from result.rows


def _config_error_row(raw, exc):
    get = raw.get if isinstance(raw, dict) else (lambda k, default=None: getattr(raw, k, default))
    act = get("activation", None)
    if isinstance(act, dict):
        act = act.get("kind", "")
    elif act is not None:
        act = getattr(act, "name", str(act))
    return ReplicateRow(
        config_hash="",
        seed=get("seed", ""),
        replicate="",
        d=get("d", ""),
        q=get("q", ""),
        m=get("m", ""),
        eta=_NAN,
        activation=act or "",
        sign_mode=get("sign_mode", ""),
        gradient_mode=get("gradient_mode", ""),
        error=f"ConfigError: {exc}",
    )


def write_csv(rows, fh):
    """Write a header and one line per row; returns the number of rows."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    n = 0
    for row in rows:
        writer.writerow(row.csv_values())
        n += 1
    return n


def lemma_report_document(result):
    """JSON-ready lemma report for an :class:`ExperimentResult`."""
    reps = []
    for row in result.rows:
        reps.append(
            {
                "replicate": row.replicate,
                "seed": row.seed,
                "error": row.error,
                "report": None if row.lemma is None else row.lemma.to_dict(),
            }
        )
    passed = all(not r.error and r.lemma is not None and r.lemma.passed for r in result.rows)
    return {
        "config": result.config.to_dict(),
        "config_hash": config_hash(result.config),
        "assumptions": result.assumptions,
        "replicates": reps,
        "passed": passed,
    }
