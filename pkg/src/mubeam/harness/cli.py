"""Command line entry point: ``mubeam {design,pattern,train,overhead,trace}``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys

import numpy as np

from ..amcf import BeamSpec, amcf_design, build_ue_codebook, codebook_patterns, quantized_grid
from ..array_channel import beam_gain, gain_db, is_power_of_two
from ..bs_codebook import layer_sets_from_gamma, multi_mainlobe_codeword, top_layer_sets
from ..protocol import SCHEMES, feedback_overhead, overhead
from .config import ConfigError, ExperimentSpec, emit_config, load_config
from .runner import (NumericalFailure, check_conflicts, run_experiment, run_trial,
                     ue_codebook_for, write_metrics)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("mubeam")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of integers, got {text!r}")


def _names(text: str) -> list[str]:
    names = [x for x in text.replace(",", " ").split()]
    if "all" in names:
        return list(SCHEMES)
    bad = [n for n in names if n not in SCHEMES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown scheme(s) {bad}; choose from {', '.join(SCHEMES)}")
    return names


def _u64(text: str) -> int:
    val = int(text, 0)
    if not 0 <= val < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return val


def _pow2(text: str) -> int:
    val = int(text)
    if not is_power_of_two(val):
        raise argparse.ArgumentTypeError(f"{val} is not a power of two")
    return val


def _write_rows(path: str, header, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _codeword_rows(layer, index, w):
    return [(layer, index, n, repr(float(x.real)), repr(float(x.imag))) for n, x in enumerate(w)]


def _pattern_rows(layer, index, omegas, gain):
    return [(layer, index, repr(float(o)), repr(float(g))) for o, g in zip(omegas, gain_db(gain))]


def cmd_design(args) -> int:
    if args.codebook:
        book = build_ue_codebook(args.n, args.q, args.m)
        cw, pat = [], []
        for s in range(1, book.depth + 1):
            for m in range(1, 2 ** s + 1):
                cw += _codeword_rows(s, m, book.matrix(s)[:, m - 1])
        for s, m, omegas, gain in codebook_patterns(book, args.q):
            pat += _pattern_rows(s, m, omegas, gain)
        for s, traj in sorted(book.objectives.items()):
            print(f"layer {s}: objective " + " ".join(f"{x:.6g}" for x in traj))
    else:
        try:
            spec = BeamSpec(args.omega0, args.b, args.n, args.q, args.m)
        except ValueError as exc:
            print(f"design: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        res = amcf_design(spec)
        ratio = 2.0 / args.b
        layer = int(round(math.log2(ratio))) if is_power_of_two(int(round(ratio))) and \
            abs(ratio - round(ratio)) < 1e-12 else 0
        w = res.codeword.weights
        cw = _codeword_rows(layer, 1, w)
        omegas = quantized_grid(spec.q)
        pat = _pattern_rows(layer, 1, omegas, beam_gain(w, omegas))
        print("objective " + " ".join(f"{x:.6g}" for x in res.objective))
    _write_rows(os.path.join(args.out, "codewords.csv"), ("layer", "index", "antenna", "re", "im"), cw)
    _write_rows(os.path.join(args.out, "pattern.csv"), ("layer", "index", "omega", "gain_db"), pat)
    print(f"wrote {args.out}/codewords.csv and {args.out}/pattern.csv")
    return EXIT_OK


def cmd_pattern(args) -> int:
    if args.side == "ue":
        book = build_ue_codebook(args.n_ue, args.q, args.m)
        rows = []
        for s, m, omegas, gain in codebook_patterns(book, args.q):
            rows += _pattern_rows(s, m, omegas, gain)
        _write_rows(os.path.join(args.out, "ue_pattern.csv"), ("layer", "index", "omega", "gain_db"), rows)
        print(f"wrote {args.out}/ue_pattern.csv")
        return EXIT_OK
    n_bs = args.n_bs
    depth = n_bs.bit_length() - 1
    if args.layer == 1:
        sets = top_layer_sets(n_bs)
    else:
        if not args.gamma:
            print("pattern: --gamma is required below the top layer", file=sys.stderr)
            return EXIT_CONFIG
        try:
            sets = layer_sets_from_gamma(args.layer, args.gamma, n_bs)
        except ValueError as exc:
            print(f"pattern: {exc} (layers 1..{depth - 1})", file=sys.stderr)
            return EXIT_CONFIG
    omegas = quantized_grid(args.q or 16 * n_bs)
    rows = []
    for cs in sets:
        rows += _pattern_rows(cs.layer, cs.slot, omegas, beam_gain(multi_mainlobe_codeword(cs).weights, omegas))
    _write_rows(os.path.join(args.out, "bs_pattern.csv"), ("layer", "slot", "omega", "gain_db"), rows)
    print(f"wrote {args.out}/bs_pattern.csv")
    return EXIT_OK


def _spec_from_args(args) -> ExperimentSpec:
    spec = load_config(args.config) if args.config else ExperimentSpec()
    try:
        return spec.with_overrides(
            master_seed=args.seed,
            snr_grid_db=tuple(args.snr_db) if args.snr_db else None,
            trials=args.trials,
            schemes=tuple(args.scheme) if args.scheme else None,
            output_dir=args.out,
            genie_he=True if args.genie_he else None,
            workers=getattr(args, "workers", None),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def cmd_train(args) -> int:
    spec = _spec_from_args(args)
    log.info("running %d trials over %d SNR points", spec.trials, len(spec.snr_grid_db))
    rows = run_experiment(spec)
    path = write_metrics(rows, spec.output_dir)
    with open(os.path.join(spec.output_dir, "config.ini"), "w", encoding="utf-8") as fh:
        fh.write(emit_config(spec))
    if args.trace:
        _dump_trace(spec, os.path.join(spec.output_dir, "trace.jsonl"))
    for r in rows:
        print(f"{r['snr_db']:7.2f} dB  {r['scheme']:<12} success={r['success_rate']:.4f} "
              f"rate={r['avg_sum_rate']:.4f}  slots={r['slots']}")
    print(f"wrote {path}")
    check_conflicts(spec, rows)
    return EXIT_OK


def _dump_trace(spec: ExperimentSpec, path: str, trial: int = 0):
    book = ue_codebook_for(spec)
    _, traces = run_trial(spec, book, trial, want_trace=True)
    with open(path, "w", encoding="utf-8") as fh:
        for snr, tr in traces:
            for line in tr.to_jsonl().splitlines():
                fh.write(line[:-1] + f', "snr_db": {snr!r}}}\n')
    return path


def cmd_trace(args) -> int:
    spec = _spec_from_args(args)
    os.makedirs(spec.output_dir, exist_ok=True)
    path = _dump_trace(spec, os.path.join(spec.output_dir, "trace.jsonl"), args.trial)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_overhead(args) -> int:
    n_bs, n_ue, k = args.n_bs, args.n_ue, args.k
    if n_ue > n_bs:
        print("overhead: n_ue must not exceed n_bs", file=sys.stderr)
        return EXIT_CONFIG
    labels = {"simultaneous": "proposed (simultaneous)", "sweep": "beam sweeping", "tdma": "TDMA hierarchical"}
    print(f"N_BS={n_bs} N_UE={n_ue} K={k}")
    print(f"{'scheme':<26}{'training':>10}{'feedback':>10}")
    for s in ("simultaneous", "sweep", "tdma"):
        print(f"{labels[s]:<26}{overhead(s, n_bs, n_ue, k):>10}{feedback_overhead(s, n_bs, n_ue, k):>10}")
    return EXIT_OK


def _add_experiment_flags(p):
    p.add_argument("--config", help="INI experiment config")
    p.add_argument("--seed", type=_u64, help="master seed (unsigned 64-bit)")
    p.add_argument("--snr-db", type=_floats, help="SNR grid in dB, e.g. '-10,0,10'")
    p.add_argument("--trials", type=int)
    p.add_argument("--scheme", type=_names, help="schemes: simultaneous,tdma,sweep or all")
    p.add_argument("--out", help="output directory")
    p.add_argument("--genie-he", action="store_true", help="use exact effective channel for ZF")
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mubeam", description="Multiuser hierarchical mmWave beam training")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="AMCF codeword or UE codebook design")
    d.add_argument("--n", type=_pow2, default=32, help="antennas")
    d.add_argument("--b", type=float, default=0.5, help="beam width in cosine domain")
    d.add_argument("--omega0", type=float, default=-1.0, help="left coverage edge")
    d.add_argument("--q", type=int, help="angle grid size (default 16*n)")
    d.add_argument("--m", type=int, default=50, help="AMCF iterations")
    d.add_argument("--codebook", action="store_true", help="design the whole UE hierarchical codebook")
    d.add_argument("--out", default="design")
    d.set_defaults(func=cmd_design)

    p = sub.add_parser("pattern", help="beam pattern CSV of UE or adaptive BS codewords")
    p.add_argument("--side", choices=("ue", "bs"), default="bs")
    p.add_argument("--n-bs", type=_pow2, default=128)
    p.add_argument("--n-ue", type=_pow2, default=16)
    p.add_argument("--layer", type=int, default=1)
    p.add_argument("--gamma", type=_ints, help="previous-layer feedback, e.g. '1,1,2,2'")
    p.add_argument("--q", type=int)
    p.add_argument("--m", type=int, default=50)
    p.add_argument("--out", default="pattern")
    p.set_defaults(func=cmd_pattern)

    t = sub.add_parser("train", help="Monte Carlo beam training sweep over SNR")
    _add_experiment_flags(t)
    t.add_argument("--trace", action="store_true", help="also dump the layer trace of trial 0")
    t.set_defaults(func=cmd_train)

    tr = sub.add_parser("trace", help="layer-by-layer trace of one trial")
    _add_experiment_flags(tr)
    tr.add_argument("--trial", type=int, default=0)
    tr.set_defaults(func=cmd_trace)

    o = sub.add_parser("overhead", help="training and feedback overhead table")
    o.add_argument("--n-bs", type=_pow2, default=128)
    o.add_argument("--n-ue", type=_pow2, default=16)
    o.add_argument("--k", type=int, default=8)
    o.set_defaults(func=cmd_overhead)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
