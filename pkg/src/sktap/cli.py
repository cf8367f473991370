"""Command-line surface for every experiment, with reproducible outputs.

Every subcommand echoes its full configuration, so a run can be reproduced
bit-exactly from its output file.  Floating-point values are printed with 17
significant digits (full float64 round-trip precision).  Exit codes: 0 on
success, 1 on usage/validation errors, 2 on numerical failure (the failing
seed is printed when one is known).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .dynamics import ItoCheckConfig, cavity_difference_path, ito_decomposition_trace
from .ensemble import EnsembleConfig, run_ensemble
from .errors import NumericalError
from .gibbs import (
    coupling_derivative_residual,
    gibbs_tables,
    key_identity_residual,
    susceptibility_fd,
)
from .model import ModelParams, sample_couplings, sample_path, substream_seed
from .spectral import resolvent_error, s_prime_at_e0, spectral_margin
from .tap import (
    QuadratureRule,
    at_value,
    f_map,
    htap1_residuals,
    htap2_residual,
    predicted_mij_sq,
    solve_q,
    tap1_residuals,
    tap2_residual,
)

_EXPERIMENT_NAMES = {
    "htap1": "htap1",
    "htap2": "htap2",
    "tap1": "tap1",
    "tap2": "tap2",
    "qn-conc": "qn_conc",
    "mij-sq": "mij_sq",
    "mij-moment": "mij_moment",
    "ito": "ito",
    "spectral": "spectral",
}


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


class _Parser(argparse.ArgumentParser):
    """argparse that exits with code 1 on usage errors, as documented."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_n_list(text: str) -> tuple:
    try:
        values = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma list of integers: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty size list")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sktap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", type=Path, default=None, help="write the payload here")
    common.add_argument("--quad-nodes", type=int, default=61)

    p = sub.add_parser("fixed-point", parents=[common], help="solve q = E tanh^2(h + sqrt(tq) Z)")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-12)

    p = sub.add_parser("at-line", parents=[common], help="AT criterion values on a grid of t")
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--t-min", type=float, required=True)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--grid", type=int, default=11)

    p = sub.add_parser(
        "verify-identities", parents=[common], help="conditional/derivative identity residuals"
    )
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--h", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--step", type=float, default=1e-5)

    p = sub.add_parser(
        "tap-residuals", parents=[common], help="all four TAP residual kinds for one sample"
    )
    p.add_argument("--n", type=int, default=12)
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--h", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--pair", type=str, default="0,1", help="pair i,j for the two-point residuals")

    p = sub.add_parser("scaling", parents=[common], help="disorder ensemble + log-log decay fit")
    p.add_argument("--experiment", choices=sorted(_EXPERIMENT_NAMES), required=True)
    p.add_argument("--n", type=_parse_n_list, required=True, help="comma list of sizes")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--moment-p", type=float, default=2.1)
    p.add_argument("--steps", type=int, default=64, help="grid steps for the ito experiment")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--loglog-out", type=Path, default=None,
                   help="also write the plot-ready (log n, log mean) table here")

    p = sub.add_parser("overlap", parents=[common], help="overlap concentration (q_n - q)^2")
    p.add_argument("--n", type=_parse_n_list, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser(
        "mij-variance", parents=[common], help="measured n E m01^2 vs leading-order prediction"
    )
    p.add_argument("--n", type=_parse_n_list, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser(
        "dynamics", parents=[common], help="Ito decomposition residual along one coupling path"
    )
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--h", type=float, default=0.3)
    p.add_argument("--steps", type=int, default=256)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--site-i", type=int, default=0)
    p.add_argument("--site-j", type=int, default=1)

    p = sub.add_parser(
        "spectral", parents=[common], help="resolvent errors and spectral margins over disorder"
    )
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--t", type=float, default=0.4)
    p.add_argument("--h", type=float, default=0.3)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=42)
    return parser


def _cmd_fixed_point(args) -> dict:
    rule = QuadratureRule.gauss_hermite(args.quad_nodes)
    q = solve_q(args.t, args.h, rule, tol=args.tol)
    q2 = solve_q(args.t, args.h, rule.doubled(), tol=args.tol)
    at = at_value(args.t, args.h, q, rule)
    print(f"q = {_fmt(q)}")
    print(f"at_value = {_fmt(at)}")
    return {
        "columns": ["t", "h", "q", "at_value"],
        "rows": [[args.t, args.h, q, at]],
        "summary": {
            "q": q,
            "at_value": at,
            "fixed_point_residual": abs(q - f_map(q, args.t, args.h, rule)),
            "node_doubling_delta": abs(q - q2),
        },
    }


def _cmd_at_line(args) -> dict:
    rule = QuadratureRule.gauss_hermite(args.quad_nodes)
    if args.grid < 2 or args.t_max <= args.t_min:
        raise ValueError("need grid >= 2 and t_max > t_min")
    rows = []
    for t in np.linspace(args.t_min, args.t_max, args.grid):
        q = solve_q(float(t), args.h, rule)
        rows.append([float(t), q, at_value(float(t), args.h, q, rule)])
    for t, q, at in rows:
        print(f"t = {_fmt(t)}  q = {_fmt(q)}  at_value = {_fmt(at)}")
    return {"columns": ["t", "q", "at_value"], "rows": rows, "summary": {}}


def _cmd_verify_identities(args) -> dict:
    params = ModelParams.uniform(args.n, args.t, args.h)
    cm = sample_couplings(params, args.seed)
    rng = np.random.default_rng(substream_seed(args.seed, 1))
    rows = []
    maxima = {"pair_identity": 0.0, "triple_identity": 0.0, "susceptibility": 0.0, "coupling_derivative": 0.0}
    for trial in range(args.trials):
        sites = rng.permutation(args.n)
        i, j, k = (int(v) for v in sites[:3])
        n_clamp = int(rng.integers(0, max(1, args.n - 4)))
        clamped = {int(s): int(rng.choice((-1, 1))) for s in sites[3 : 3 + n_clamp]}
        r1 = key_identity_residual(cm, params, clamped, i, j)
        r2 = key_identity_residual(cm, params, clamped, i, j, k)
        r3 = susceptibility_fd(cm, params, i, j, args.step) - gibbs_tables(cm, params).pair[i, j]
        r4 = coupling_derivative_residual(cm, params, i, j, k, args.step)
        rows.append([trial, r1, r2, r3, r4])
        maxima["pair_identity"] = max(maxima["pair_identity"], abs(r1))
        maxima["triple_identity"] = max(maxima["triple_identity"], abs(r2))
        maxima["susceptibility"] = max(maxima["susceptibility"], abs(r3))
        maxima["coupling_derivative"] = max(maxima["coupling_derivative"], abs(r4))
    for name, value in maxima.items():
        print(f"max |{name}| = {_fmt(value)}")
    tolerances = {
        "pair_identity": 1e-12,
        "triple_identity": 1e-12,
        "susceptibility": 1e-8,
        "coupling_derivative": 1e-7,
    }
    for name, tol in tolerances.items():
        if maxima[name] > tol:
            raise NumericalError(
                f"{name} residual {maxima[name]:.3e} exceeds {tol:g} (seed={args.seed})"
            )
    return {
        "columns": ["trial", "pair_identity", "triple_identity", "susceptibility", "coupling_derivative"],
        "rows": rows,
        "summary": {f"max_{k}": v for k, v in maxima.items()},
    }


def _cmd_tap_residuals(args) -> dict:
    params = ModelParams.uniform(args.n, args.t, args.h)
    cm = sample_couplings(params, args.seed)
    i, j = (int(v) for v in args.pair.split(","))
    h1 = htap1_residuals(cm, params)
    t1 = tap1_residuals(cm, params)
    rows = [[site, h1.residuals[site], t1.residuals[site]] for site in range(args.n)]
    summary = {
        "htap1_mean_square": h1.mean_square,
        "tap1_mean_square": t1.mean_square,
        "htap2_residual": htap2_residual(cm, params, i, j),
        "tap2_residual": tap2_residual(cm, params, i, j),
        "pair_i": i,
        "pair_j": j,
    }
    for key in ("htap1_mean_square", "tap1_mean_square", "htap2_residual", "tap2_residual"):
        print(f"{key} = {_fmt(summary[key])}")
    return {"columns": ["site", "htap1_residual", "tap1_residual"], "rows": rows, "summary": summary}


def _ensemble_payload(stats) -> dict:
    cfg = stats.config
    rows = [[n, *stats.per_n[n]] for n in cfg.n_values]
    summary = {"degenerate": stats.degenerate}
    if stats.fit is not None:
        summary.update(
            {"slope": stats.fit[0], "intercept": stats.fit[1], "slope_stderr": stats.fit[2]}
        )
    return {"columns": ["n", "mean", "variance", "stderr"], "rows": rows, "summary": summary}


def _cmd_scaling(args) -> dict:
    cfg = EnsembleConfig(
        n_values=args.n,
        samples=args.samples,
        t=args.t,
        h=args.h,
        master_seed=args.seed,
        experiment=_EXPERIMENT_NAMES[args.experiment],
        moment_p=args.moment_p,
        ito_steps=args.steps,
        quad_nodes=args.quad_nodes,
        workers=args.threads,
    )
    stats = run_ensemble(cfg)
    payload = _ensemble_payload(stats)
    if stats.fit is not None:
        print(f"slope = {_fmt(stats.fit[0])}  stderr = {_fmt(stats.fit[2])}")
    else:
        print("fit degenerate (nonpositive means)")
    if args.loglog_out is not None:
        args.loglog_out.write_text(stats.loglog_text())
    return payload


def _cmd_overlap(args) -> dict:
    cfg = EnsembleConfig(
        n_values=args.n,
        samples=args.samples,
        t=args.t,
        h=args.h,
        master_seed=args.seed,
        experiment="qn_conc",
        quad_nodes=args.quad_nodes,
        workers=args.threads,
    )
    stats = run_ensemble(cfg)
    payload = _ensemble_payload(stats)
    rule = QuadratureRule.gauss_hermite(args.quad_nodes)
    q_ref = solve_q(args.t, args.h, rule)
    first, last = cfg.n_values[0], cfg.n_values[-1]
    payload["summary"]["q_ref"] = q_ref
    payload["summary"]["decreasing"] = bool(stats.per_n[last][0] < stats.per_n[first][0])
    print(f"q = {_fmt(q_ref)}")
    print(f"mean (q_n - q)^2: n={first}: {_fmt(stats.per_n[first][0])}  n={last}: {_fmt(stats.per_n[last][0])}")
    return payload


def _cmd_mij_variance(args) -> dict:
    rule = QuadratureRule.gauss_hermite(args.quad_nodes)
    rows = []
    for n in args.n:
        cfg = EnsembleConfig(
            n_values=(n,),
            samples=args.samples,
            t=args.t,
            h=args.h,
            master_seed=args.seed,
            experiment="mij_sq",
            quad_nodes=args.quad_nodes,
            workers=args.threads,
        )
        stats = run_ensemble(cfg)
        measured = stats.per_n[n][0]
        predicted = n * predicted_mij_sq(args.t, args.h, n, rule)
        rows.append([n, measured, stats.per_n[n][2], predicted, measured / predicted])
        print(
            f"n = {n}  measured n E m01^2 = {_fmt(measured)}  predicted = {_fmt(predicted)}"
            f"  ratio = {_fmt(measured / predicted)}"
        )
    return {
        "columns": ["n", "measured", "stderr", "predicted", "ratio"],
        "rows": rows,
        "summary": {},
    }


def _cmd_dynamics(args) -> dict:
    params = ModelParams.uniform(args.n, args.t, args.h)
    path = sample_path(params, args.steps, args.seed)
    cfg = ItoCheckConfig(clamped_site=args.site_i, target_site=args.site_j, steps=args.steps)
    trace = ito_decomposition_trace(path, cfg, params)
    diff = cavity_difference_path(path, params, args.site_i, args.site_j)
    rows = [
        [float(s), float(l), float(m), float(d)]
        for s, l, m, d in zip(trace["s"], trace["lhs"], trace["martingale"], trace["drift"])
    ]
    print(f"residual = {_fmt(trace['residual'])}")
    print(f"terminal cavity difference = {_fmt(float(diff[-1]))}")
    return {
        "columns": ["s", "lhs", "martingale_partial", "drift_partial"],
        "rows": rows,
        "summary": {
            "residual": trace["residual"],
            "terminal_cavity_difference": float(diff[-1]),
        },
    }


def _cmd_spectral(args) -> dict:
    params = ModelParams.uniform(args.n, args.t, args.h)
    rows = []
    errors = []
    below = 0
    for k in range(args.samples):
        seed = substream_seed(args.seed, args.n, k)
        cm = sample_couplings(params, seed)
        try:
            tabs = gibbs_tables(cm, params)
            err = resolvent_error(cm, params, tables=tabs)
            eigmin, e0 = spectral_margin(cm, params, tables=tabs)
        except NumericalError as exc:
            raise NumericalError(f"sample {k} (seed={seed}): {exc}") from exc
        rows.append([args.n, seed, err, eigmin - e0])
        errors.append(err)
        below += eigmin > e0
    cm0 = sample_couplings(params, substream_seed(args.seed, args.n, 0))
    fd, closed = s_prime_at_e0(cm0, params)
    summary = {
        "median_resolvent_error": float(np.median(errors)),
        "margin_fraction": below / args.samples,
        "s_prime_fd": fd,
        "s_prime_closed": closed,
    }
    for key, value in summary.items():
        print(f"{key} = {_fmt(value)}")
    return {"columns": ["n", "seed", "resolvent_error", "margin"], "rows": rows, "summary": summary}


_HANDLERS = {
    "fixed-point": _cmd_fixed_point,
    "at-line": _cmd_at_line,
    "verify-identities": _cmd_verify_identities,
    "tap-residuals": _cmd_tap_residuals,
    "scaling": _cmd_scaling,
    "overlap": _cmd_overlap,
    "mij-variance": _cmd_mij_variance,
    "dynamics": _cmd_dynamics,
    "spectral": _cmd_spectral,
}


def _config_echo(args) -> dict:
    skip = {"out", "format"}
    echo = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        if isinstance(value, Path):
            value = str(value)
        if isinstance(value, tuple):
            value = list(value)
        echo[key] = value
    return echo


def _render_csv(payload: dict) -> str:
    lines = [f"# {k}={_fmt(v)}" for k, v in sorted(payload["config"].items())]
    lines += [f"# summary {k}={_fmt(v)}" for k, v in sorted(payload["summary"].items())]
    lines.append(",".join(payload["columns"]))
    for row in payload["rows"]:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _render_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_request:
        code = exit_request.code
        return code if isinstance(code, int) else 0
    try:
        payload = _HANDLERS[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 1
    payload["config"] = _config_echo(args)
    text = _render_csv(payload) if args.format == "csv" else _render_json(payload)
    if args.out is not None:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
