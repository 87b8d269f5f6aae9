"""Batch command-line frontend.

Subcommands:
  randomize      privatize a label file (one numeric label per line)
  optimize-bins  compute the optimal bin layout for a prior
  bench          sweep mechanisms x epsilons into a CSV of per-rep losses
  verify         run the self-check suites (oracle, LP, DP ratio, samplers)

Exit codes: 0 success, 1 verification failure, 2 parse error, 3 precondition
or configuration error.  The default seed comes from the LABELDP_SEED
environment variable; an explicit --seed wins.  Output is a pure function of
(input bytes, flags, seed).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import losses
from .binopt import BinLayout, optimize_bins
from .core import LabelSet, Prior, make_label_set, make_prior
from .mechanisms import (
    NoiseParams,
    Rng,
    clip,
    discrete_laplace_sample,
    discrete_staircase_sample,
    exponential_mechanism_sample,
    laplace_sample,
    randomized_response_sample,
    rr_on_bins_randomize,
    staircase_sample,
)
from .pipeline import label_randomizer, snap_to_universe
from .prior import default_budget_split

SEED_ENV = "LABELDP_SEED"
MECHANISMS = (
    "rr-on-bins",
    "laplace",
    "discrete-laplace",
    "staircase",
    "discrete-staircase",
    "exponential",
    "rr",
)
ADDITIVE = ("laplace", "discrete-laplace", "staircase", "discrete-staircase")


class ParseError(Exception):
    """Malformed input file or value (exit code 2)."""


def fmt(x: float) -> str:
    """Round-trip exact decimal for machine-readable output."""
    return format(float(x), ".17g")


def read_labels(path: str, column: int | None = None) -> list[float]:
    """One numeric label per row; a single non-numeric header line is allowed.
    With column=N, rows are comma-split and field N (0-based) is used."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}")
    out: list[float] = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        if column is not None:
            fields = text.split(",")
            if column >= len(fields):
                raise ParseError(f"{path}:{lineno}: no column {column} in {text!r}")
            text = fields[column].strip()
        try:
            v = float(text)
        except ValueError:
            if lineno == 1 and not out:
                continue  # header
            raise ParseError(f"{path}:{lineno}: not a number: {text!r}")
        if not math.isfinite(v):
            raise ParseError(f"{path}:{lineno}: non-finite label {text!r}")
        out.append(v)
    if not out:
        raise ParseError(f"{path}: no labels found")
    return out


def read_prior_file(path: str) -> Prior:
    """Two comma-separated columns: label,probability.  Header optional."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}")
    labels: list[float] = []
    weights: list[float] = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        parts = [t.strip() for t in text.split(",")]
        if len(parts) != 2:
            raise ParseError(f"{path}:{lineno}: expected 'label,probability', got {text!r}")
        try:
            y, w = float(parts[0]), float(parts[1])
        except ValueError:
            if lineno == 1 and not labels:
                continue  # header
            raise ParseError(f"{path}:{lineno}: not numeric: {text!r}")
        labels.append(y)
        weights.append(w)
    if not labels:
        raise ParseError(f"{path}: no prior rows found")
    return make_prior(make_label_set(labels), _reorder(labels, weights))


def _reorder(labels, weights):
    order = sorted(range(len(labels)), key=lambda i: labels[i])
    merged: dict[float, float] = {}
    for i in order:
        merged[labels[i]] = merged.get(labels[i], 0.0) + weights[i]
    return [merged[y] for y in sorted(merged)]


def parse_universe(spec: str) -> LabelSet:
    """'min:max:step' or an explicit comma-separated value list."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ParseError(f"universe spec must be min:max:step, got {spec!r}")
        try:
            lo, hi, step = float(parts[0]), float(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"non-numeric universe spec: {spec!r}")
        if step <= 0:
            raise ParseError(f"universe step must be positive, got {step}")
        if lo > hi:
            raise ParseError(f"universe min {lo} > max {hi}")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return make_label_set([lo + i * step for i in range(n)])
    try:
        vals = [float(t) for t in spec.split(",") if t.strip()]
    except ValueError:
        raise ParseError(f"non-numeric universe list: {spec!r}")
    if not vals:
        raise ParseError("empty universe")
    return make_label_set(vals)


def _write_lines(path: str, values) -> None:
    with open(path, "w") as fh:
        for v in values:
            fh.write(fmt(v) + "\n")


def _layout_json(layout: BinLayout) -> dict:
    return {
        "d": layout.d,
        "boundaries": list(layout.boundaries),
        "outputs": [fmt(v) for v in layout.outputs],
        "eps": fmt(layout.eps),
        "objective": fmt(layout.objective),
    }


# ---------------------------------------------------------------------------
# randomize
# ---------------------------------------------------------------------------

def _randomize_additive(mech, raw, universe, eps, do_clip, rng):
    lo, hi = universe.y_min, universe.y_max
    sens = hi - lo
    params = NoiseParams(eps=eps, sensitivity=sens if sens > 0 else 1.0)
    arr = np.asarray(raw, dtype=float)
    if mech == "laplace":
        out = laplace_sample(arr, params, rng)
    elif mech == "staircase":
        out = staircase_sample(arr, params, rng)
    elif mech in ("discrete-laplace", "discrete-staircase"):
        snapped = snap_to_universe(arr, universe)
        if not np.all(np.equal(np.mod(universe.as_array(), 1), 0)):
            raise ValueError(f"{mech} needs an integer universe")
        ints = snapped.astype(np.int64)
        if mech == "discrete-laplace":
            out = discrete_laplace_sample(ints, params, rng)
        else:
            p2 = NoiseParams(eps=eps, sensitivity=float(int(round(sens))))
            out = discrete_staircase_sample(ints, p2, rng)
        out = out.astype(float)
    else:
        raise ValueError(f"not an additive mechanism: {mech}")
    if do_clip:
        out = clip(out, lo, hi)
    return out


def cmd_randomize(args) -> int:
    raw = read_labels(args.input, args.column)
    universe = parse_universe(args.universe)
    rng = Rng(args.seed)
    mech = args.mechanism
    report: dict = {"mechanism": mech, "seed": args.seed, "n": len(raw)}
    loss = losses.by_name(args.loss)

    if mech == "rr-on-bins":
        if args.eps1 is not None:
            eps1 = args.eps1
            eps2 = args.eps - eps1
            if eps1 <= 0 or eps2 < 0:
                raise ValueError(f"invalid split: eps1={eps1}, eps2={eps2}")
        else:
            budget = default_budget_split(args.eps, universe.k, len(raw))
            eps1, eps2 = budget.eps1, budget.eps2
        noisy, run_report = label_randomizer(raw, universe, eps1, eps2, loss, rng)
        report.update(
            budget={"eps1": fmt(eps1), "eps2": fmt(eps2), "total": fmt(eps1 + eps2)},
            layout=_layout_json(run_report.layout),
            estimated_prior={
                "labels": [fmt(v) for v in run_report.estimated_prior.labels.values],
                "probs": [fmt(p) for p in run_report.estimated_prior.probs],
            },
            mechanism_loss_on_inputs=fmt(run_report.mechanism_loss_on_inputs),
            loss_kind=run_report.loss_kind,
        )
    elif mech in ADDITIVE:
        noisy = _randomize_additive(mech, raw, universe, args.eps, args.clip, rng)
        report.update(eps=fmt(args.eps), clip=bool(args.clip))
        report["mechanism_loss_on_inputs"] = fmt(
            float(np.mean(loss.eval_fn(np.asarray(noisy), np.asarray(raw))))
        )
    elif mech == "exponential":
        lo, hi = universe.y_min, universe.y_max
        arr = clip(np.asarray(raw, dtype=float), lo, hi)
        noisy = np.array(
            [exponential_mechanism_sample(v, lo, hi, args.eps, rng) for v in arr]
        )
        report.update(eps=fmt(args.eps))
        report["mechanism_loss_on_inputs"] = fmt(
            float(np.mean(loss.eval_fn(noisy, np.asarray(raw))))
        )
    elif mech == "rr":
        grid = universe.as_array()
        snapped = snap_to_universe(np.asarray(raw, dtype=float), universe)
        idx = np.searchsorted(grid, snapped)
        noisy = np.array(
            [
                grid[randomized_response_sample(int(i) + 1, universe.k, args.eps, rng) - 1]
                for i in idx
            ]
        )
        report.update(eps=fmt(args.eps))
        report["mechanism_loss_on_inputs"] = fmt(
            float(np.mean(loss.eval_fn(noisy, np.asarray(raw))))
        )
    else:
        raise ValueError(f"unknown mechanism {mech!r}")

    _write_lines(args.output, noisy)
    with open(args.output + ".report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


# ---------------------------------------------------------------------------
# optimize-bins
# ---------------------------------------------------------------------------

def cmd_optimize_bins(args) -> int:
    if args.prior_file:
        prior = read_prior_file(args.prior_file)
    elif args.input:
        if not args.public_prior:
            raise ValueError(
                "raw labels feed the optimizer directly only with --public-prior; "
                "use 'randomize' for private estimation"
            )
        raw = read_labels(args.input, args.column)
        universe = parse_universe(args.universe) if args.universe else make_label_set(raw)
        snapped = snap_to_universe(raw, universe)
        counts = np.bincount(
            np.searchsorted(universe.as_array(), snapped), minlength=universe.k
        )
        prior = make_prior(universe, counts)
    else:
        raise ValueError("need --prior-file or --input with --public-prior")

    loss = losses.by_name(args.loss)
    layout = optimize_bins(prior, args.eps, loss)

    ys = prior.labels.values
    print(f"d = {layout.d}   objective = {layout.objective:.6g}   eps = {args.eps:.6g}")
    print("bin  interval              output")
    start = 0
    for b_idx, end in enumerate(layout.boundaries):
        lo, hi = ys[start], ys[end - 1]
        print(f"{b_idx + 1:>3}  [{lo:.6g}, {hi:.6g}]".ljust(27) + f"{layout.outputs[b_idx]:.6g}")
        start = end
    blob = json.dumps(_layout_json(layout), sort_keys=True)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(blob + "\n")
    else:
        print(blob)
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def _synthetic_prior(spec: str, universe: LabelSet) -> Prior:
    name, _, arg = spec.partition(":")
    k = universe.k
    ranks = np.arange(1, k + 1, dtype=float)
    if name == "zipf":
        a = float(arg) if arg else 1.5
        w = ranks ** (-a)
    elif name == "geometric":
        q = float(arg) if arg else 0.95
        if not 0 < q < 1:
            raise ValueError(f"geometric ratio must be in (0,1), got {q}")
        w = q ** (ranks - 1)
    elif name == "uniform":
        w = np.ones(k)
    else:
        raise ValueError(f"unknown synthetic prior {name!r} (zipf|geometric|uniform)")
    return make_prior(universe, w)


def _bench_less_loss(mech, ys, universe, eps, loss, do_clip, rng):
    """Per-label losses of one mechanism at one eps on one replicate."""
    if mech == "rr-on-bins":
        budget = default_budget_split(eps, universe.k, len(ys))
        noisy, _ = label_randomizer(ys, universe, budget.eps1, budget.eps2, loss, rng)
    elif mech in ADDITIVE:
        noisy = _randomize_additive(mech, ys, universe, eps, do_clip, rng)
    elif mech == "exponential":
        lo, hi = universe.y_min, universe.y_max
        noisy = np.array([exponential_mechanism_sample(v, lo, hi, eps, rng) for v in ys])
    elif mech == "rr":
        grid = universe.as_array()
        idx = np.searchsorted(grid, snap_to_universe(ys, universe))
        noisy = np.array(
            [grid[randomized_response_sample(int(i) + 1, universe.k, eps, rng) - 1] for i in idx]
        )
    else:
        raise ValueError(f"unknown mechanism {mech!r}")
    return float(np.mean(loss.eval_fn(np.asarray(noisy), np.asarray(ys))))


def cmd_bench(args) -> int:
    universe = parse_universe(args.universe)
    loss = losses.by_name(args.loss)
    eps_grid = [float(t) for t in args.eps_list.split(",") if t.strip()]
    if not eps_grid or any(e <= 0 for e in eps_grid):
        raise ValueError(f"bad eps list {args.eps_list!r}")
    mechs = [m.strip() for m in args.mechanisms.split(",") if m.strip()]
    for m in mechs:
        if m not in MECHANISMS:
            raise ValueError(f"unknown mechanism {m!r}; pick from {', '.join(MECHANISMS)}")

    root = Rng(args.seed)
    if args.input:
        base = np.asarray(read_labels(args.input, args.column), dtype=float)
        base = snap_to_universe(base, universe)
        draw = lambda rng: base
    else:
        prior = _synthetic_prior(args.synthetic, universe)
        grid = universe.as_array()
        probs = prior.probs_array()
        draw = lambda rng: rng.gen.choice(grid, size=args.n, p=probs)

    rows = ["mechanism,eps,rep,loss"]
    cell = 0
    for mech in mechs:
        for eps in eps_grid:
            for rep in range(args.reps):
                rng = root.spawn(cell)
                cell += 1
                ys = draw(rng)
                val = _bench_less_loss(mech, ys, universe, eps, loss, args.clip, rng)
                rows.append(f"{mech},{fmt(eps)},{rep},{fmt(val)}")
    text = "\n".join(rows) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args) -> int:
    from . import selfcheck

    results = selfcheck.run_suites(
        quick=args.quick, seed=args.seed, dp_check_eps_offset=args.dp_offset
    )
    failed = 0
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failed += 0 if ok else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    try:
        default_seed = int(os.environ.get(SEED_ENV, "0"))
    except ValueError:
        default_seed = 0
    top = argparse.ArgumentParser(prog="labeldp", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=default_seed,
                       help=f"RNG seed (default from ${SEED_ENV}, else 0)")
        p.add_argument("--loss", choices=losses.BUILTIN_KINDS, default="squared")

    p = sub.add_parser("randomize", help="privatize a label file")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--eps", type=float, required=True, help="total privacy budget")
    p.add_argument("--eps1", type=float, default=None,
                   help="explicit prior-estimation budget (default sqrt(k/n))")
    p.add_argument("--mechanism", choices=MECHANISMS, default="rr-on-bins")
    p.add_argument("--universe", required=True, help="min:max:step or v1,v2,...")
    p.add_argument("--column", type=int, default=None, help="CSV column index")
    p.add_argument("--clip", action=argparse.BooleanOptionalAction, default=True,
                   help="clip additive-noise outputs into the label range")
    p.set_defaults(fn=cmd_randomize)

    p = sub.add_parser("optimize-bins", help="compute the optimal bin layout")
    common(p)
    p.add_argument("--prior-file", help="CSV of label,probability rows")
    p.add_argument("--input", help="raw label file (requires --public-prior)")
    p.add_argument("--public-prior", action="store_true",
                   help="affirm the label file is public, not sensitive")
    p.add_argument("--universe", default=None)
    p.add_argument("--column", type=int, default=None)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--output", default=None, help="write machine-readable JSON here")
    p.set_defaults(fn=cmd_optimize_bins)

    p = sub.add_parser("bench", help="mechanism x eps sweep to CSV")
    common(p)
    p.add_argument("--input", help="label file; alternative to --synthetic")
    p.add_argument("--synthetic", default="zipf:1.5",
                   help="synthetic prior spec: zipf[:a] | geometric[:q] | uniform")
    p.add_argument("--n", type=int, default=10000, help="samples per replicate")
    p.add_argument("--universe", required=True)
    p.add_argument("--column", type=int, default=None)
    p.add_argument("--eps-list", default="0.5,1,2,4")
    p.add_argument("--mechanisms", default=",".join(MECHANISMS))
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--clip", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--output", default=None)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("verify", help="run the self-check suites")
    common(p)
    p.add_argument("--quick", action="store_true", help="small instances only (<10s)")
    p.add_argument("--dp-offset", type=float, default=0.0,
                   help="offset added to eps in the DP ratio check (fault injection)")
    p.set_defaults(fn=cmd_verify)
    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ParseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
