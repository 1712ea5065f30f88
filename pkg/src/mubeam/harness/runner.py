"""Seeded Monte Carlo runner producing the success-rate / sum-rate metrics table.

Trial ``i`` draws its channels from ``SeedSequence(master_seed, spawn_key=(i, 0))``
and the noise of scheme ``j`` at SNR point ``p`` from ``spawn_key=(i, 1, p, j)``.
Every scheme and SNR point therefore sees the same channels, and the
results do not depend on how trials are split across workers.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..amcf import HierarchicalCodebook, build_ue_codebook
from ..array_channel import generate_channel
from ..precoding import (BeamConflictError, effective_channel, equal_powers,
                         noisy_effective_channel, sum_rate, zf_precoder)
from ..protocol import SCHEMES, TrainingResult, los_identified, overhead, run_scheme
from .config import ExperimentSpec

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("snr_db", "scheme", "success_rate", "avg_sum_rate", "slots", "trials", "seed")


class NumericalFailure(RuntimeError):
    pass


@dataclass
class TrialOutcome:
    index: int
    # keyed by (snr position, scheme)
    successes: dict
    rates: dict
    conflicts: dict
    slots: dict


def channel_rng(master_seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(trial, 0)))


def noise_rng(master_seed: int, trial: int, snr_pos: int, scheme: str) -> np.random.Generator:
    ss = np.random.SeedSequence(master_seed, spawn_key=(trial, 1, snr_pos, SCHEMES.index(scheme)))
    return np.random.default_rng(ss)


def draw_channels(spec: ExperimentSpec, trial: int):
    rng = channel_rng(spec.master_seed, trial)
    return [generate_channel(spec.system, spec.n_paths, spec.path_vars, rng)
            for _ in range(spec.system.k_users)]


def link_rate(result: TrainingResult, channels, cfg, rng, genie: bool) -> float:
    """Averaged sum rate after ZF on the trained beams; raises BeamConflictError."""
    f_rf, w_hat = result.f_hat, result.w_hat
    h_e = effective_channel(w_hat, channels, f_rf)
    if not genie:
        h_e = noisy_effective_channel(h_e, cfg.pilot_power, cfg.noise_var, rng)
    sol = zf_precoder(h_e, f_rf)
    return sum_rate(channels, f_rf, sol.f_bb, w_hat, equal_powers(cfg.p_total, cfg.k_users),
                    cfg.noise_var)


def run_trial(spec: ExperimentSpec, book: HierarchicalCodebook, trial: int,
              want_trace: bool = False):
    channels = draw_channels(spec, trial)
    out = TrialOutcome(trial, {}, {}, {}, {})
    traces = []
    for p, snr in enumerate(spec.snr_grid_db):
        cfg = spec.system.with_snr_db(snr)
        for scheme in spec.schemes:
            rng = noise_rng(spec.master_seed, trial, p, scheme)
            res = run_scheme(scheme, cfg, channels, book, rng, seed=trial)
            key = (p, scheme)
            out.successes[key] = int(np.sum(los_identified(res, channels)))
            out.slots[key] = res.slots_used
            try:
                out.rates[key] = link_rate(res, channels, cfg, rng, spec.genie_he)
                out.conflicts[key] = 0
            except BeamConflictError:
                # unresolved beam conflict: no data rate for this trial
                out.rates[key] = 0.0
                out.conflicts[key] = 1
            if want_trace:
                traces.append((snr, res.trace))
    return (out, traces) if want_trace else out


def _run_chunk(args):
    spec, book, indices = args
    return [run_trial(spec, book, i) for i in indices]


def ue_codebook_for(spec: ExperimentSpec) -> HierarchicalCodebook:
    return build_ue_codebook(spec.system.n_ue, spec.amcf_q, spec.amcf_iters)


def run_experiment(spec: ExperimentSpec, workers: int | None = None,
                   book: HierarchicalCodebook | None = None) -> list[dict]:
    """Run all trials and aggregate one metrics row per (SNR point, scheme)."""
    workers = spec.workers if workers is None else workers
    book = ue_codebook_for(spec) if book is None else book
    indices = list(range(spec.trials))
    if workers <= 1:
        outcomes = [run_trial(spec, book, i) for i in indices]
    else:
        chunks = [indices[w::workers] for w in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = [o for part in pool.map(_run_chunk, [(spec, book, c) for c in chunks])
                        for o in part]
    outcomes.sort(key=lambda o: o.index)
    return aggregate(spec, outcomes)


def aggregate(spec: ExperimentSpec, outcomes: list[TrialOutcome]) -> list[dict]:
    k = spec.system.k_users
    rows = []
    for p, snr in enumerate(spec.snr_grid_db):
        for scheme in spec.schemes:
            key = (p, scheme)
            slots = {o.slots[key] for o in outcomes}
            expected = overhead(scheme, spec.system.n_bs, spec.system.n_ue, k)
            if slots != {expected}:
                raise NumericalFailure(f"{scheme}: slot count {slots} != {expected}")
            succ = np.array([o.successes[key] for o in outcomes], dtype=float)
            rate = np.array([o.rates[key] for o in outcomes])
            conflicts = np.array([o.conflicts[key] for o in outcomes])
            rows.append({
                "snr_db": float(snr),
                "scheme": scheme,
                "success_rate": float(succ.sum() / (k * len(outcomes))),
                "avg_sum_rate": float(rate.mean()),
                "slots": expected,
                "trials": len(outcomes),
                "seed": spec.master_seed,
                "conflict_rate": float(conflicts.mean()),
            })
    return rows


def check_conflicts(spec: ExperimentSpec, rows: list[dict]):
    worst = max(rows, key=lambda r: r["conflict_rate"])
    if worst["conflict_rate"] > spec.max_conflict_rate:
        raise NumericalFailure(
            f"beam conflicts in {worst['conflict_rate']:.1%} of trials "
            f"({worst['scheme']} at {worst['snr_db']} dB) exceed {spec.max_conflict_rate:.1%}")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def metrics_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in METRIC_COLUMNS])
    return buf.getvalue()


def write_metrics(rows: list[dict], out_dir: str, name: str = "metrics.csv") -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(metrics_csv(rows))
    return path
