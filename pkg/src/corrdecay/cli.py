"""Command-line front end.

Configuration documents are the single source of truth (no prompts); every
subcommand writes deterministic output: JSON with sorted keys and exact
float repr, CSV with fixed headers and 17-significant-digit decimals, so
identical configs and seeds give byte-identical files.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
4 violated internal invariant (always a bug).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .certificates import (
    PolynomialTail,
    StretchedTail,
    nuh_constants,
    override_certificate,
    ue_certificate,
)
from .coupling import run_coupling
from .errors import ConfigError, InternalCheckError, NotDominated, NumericalError
from .grid import GridObservable, integrate, log_holder_seminorm
from .hyperbolic import NUHInput, QuotientDecay, bound_rows, kappa_constants
from .maps import doubling_spec, lsv_induced_spec, spec_from_document
from .stochastic import PSequence, poly_tail_bound, sample_h, stretched_tail_bound
from .tower import (
    build_tower,
    centered_indicator_level0,
    measure_decay,
    tower_decay_bound,
)
from .transfer import apply_once, decay_trace, invariant_density

_GRID_MIN, _GRID_MAX = 2**8, 2**18


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def emit_report(results, format: str, path: str) -> None:
    """Write rows (csv) or an object (json) deterministically.

    CSV rows must be nonempty dicts sharing one key order; floats are
    rendered with 17 significant digits.
    """
    if not results:
        raise ConfigError("refusing to write an empty report")
    try:
        if format == "json":
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(results, fh, sort_keys=True, indent=2)
                fh.write("\n")
        elif format == "csv":
            header = list(results[0].keys())
            lines = [",".join(header)]
            for row in results:
                lines.append(",".join(_fmt(row[k]) for k in header))
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("\n".join(lines) + "\n")
        else:
            raise ConfigError(f"unknown report format {format!r}")
    except OSError as exc:
        raise NumericalError(f"cannot write {path}: {exc}") from exc


def _out_path(args, name: str) -> str:
    out_dir = args.out or os.environ.get("CORRDECAY_OUTDIR", ".")
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def _check_grid(m: int) -> int:
    if m < _GRID_MIN or m > _GRID_MAX or m & (m - 1):
        raise ConfigError(f"grid size must be a power of two in [{_GRID_MIN}, {_GRID_MAX}]")
    return m


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _tail_law_from(doc) -> PolynomialTail | StretchedTail | None:
    if doc is None:
        return None
    kind = doc.get("class")
    if kind == "polynomial":
        return PolynomialTail(C_tau=float(doc["C_tau"]), beta=float(doc["beta"]))
    if kind == "stretched":
        return StretchedTail(
            C_tau=float(doc["C_tau"]), A=float(doc["A"]), gamma=float(doc["gamma"])
        )
    raise ConfigError(f"unknown tail law class {doc!r}")


def _certificate_for(spec, r_override):
    if r_override is not None:
        return override_certificate(spec.lam, spec.K, spec.eta, r_floor=float(r_override))
    cert = ue_certificate(spec.lam, spec.K, spec.eta)
    return cert


_OBSERVABLES = {
    "x-minus-half": lambda x: x - 0.5,
    "sin": lambda x: np.sin(2.0 * np.pi * x),
    "cos": lambda x: np.cos(2.0 * np.pi * x),
}


def _grid_observable(name: str, scale: float, grid_size: int, eta: float) -> GridObservable:
    if name not in _OBSERVABLES:
        raise ConfigError(f"unknown observable {name!r}; choices: {sorted(_OBSERVABLES)}")
    f = _OBSERVABLES[name]
    return GridObservable.from_function(lambda x: scale * f(x), grid_size, eta=eta)


def _load_tower(args):
    doc = _load_json(args.config)
    base_doc = doc.get("base")
    if base_doc is None:
        raise ConfigError("tower config needs a 'base' map document")
    entries = base_doc.get("branches", [])
    if len(entries) == 1 and entries[0].get("kind") == "lsv_induced":
        spec, tau, dist = lsv_induced_spec(
            alpha=float(entries[0].get("alpha", 0.5)),
            n_branches=int(entries[0].get("n_branches", 64)),
        )
    else:
        spec = spec_from_document(base_doc)
        tau = doc.get("tau")
        dist = None
        if tau is None:
            raise ConfigError("tower config needs per-branch return times 'tau'")
    law = _tail_law_from(doc.get("tail"))
    cert = _certificate_for(spec, doc.get("R"))
    return build_tower(
        spec,
        tau,
        tail_law=law,
        L_max=int(doc.get("L_max", args.l_max)),
        cert=cert,
        dist=dist,
        target=doc.get("target", "mixing"),
        allow_degenerate=bool(doc.get("allow_degenerate", False)),
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_certificate(args) -> int:
    cert = ue_certificate(args.lam, args.K, args.eta)
    payload = {"certificate": cert.as_dict()}
    if args.r_floor is not None:
        payload["override"] = override_certificate(
            args.lam, args.K, args.eta, r_floor=args.r_floor
        ).as_dict()
    emit_report(payload, "json", _out_path(args, "certificate.json"))
    print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def _cmd_decay_ue(args) -> int:
    spec = spec_from_document(_load_json(args.map))
    cert = _certificate_for(spec, args.r_floor)
    phi = _grid_observable(args.observable, args.scale, _check_grid(args.grid), spec.eta)
    phi.values -= integrate(phi)
    rows = decay_trace(spec, cert, phi, args.steps)
    if args.detailed:
        out = [
            {
                "n": r["n"],
                "sup_norm": r["sup_norm"],
                "holder_seminorm": r["holder_seminorm"],
                "certificate_bound": r["bound"],
                "error_budget": r["budget"],
            }
            for r in rows
        ]
    else:
        out = [
            {"n": r["n"], "measured": r["measured"], "bound": r["bound"], "budget": r["budget"]}
            for r in rows
        ]
    emit_report(out, "csv", _out_path(args, "decay.csv"))
    return 0


def _cmd_invariant_density(args) -> int:
    spec = spec_from_document(_load_json(args.map))
    grid = _check_grid(args.grid)
    rho = invariant_density(spec, tol=args.tol, grid_size=grid, max_iter=args.max_iter)
    residual = float(np.max(np.abs(apply_once(spec, rho).values - rho.values)))
    cert = _certificate_for(spec, args.r_floor)
    r = cert.R
    report = {
        "residual": residual,
        "mass": integrate(rho),
        "min": float(rho.values.min()),
        "max": float(rho.values.max()),
        "R": r,
        "sandwich_ok": bool(
            rho.values.min() >= math.exp(-r) - 1e-9 and rho.values.max() <= math.exp(r) + 1e-9
        ),
        "log_holder_seminorm": log_holder_seminorm(rho),
    }
    rows = [{"x": x, "rho": v} for x, v in zip(rho.nodes, rho.values)]
    emit_report(rows, "csv", _out_path(args, "density.csv"))
    emit_report(report, "json", _out_path(args, "density_report.json"))
    print(json.dumps(report, sort_keys=True, indent=2))
    return 0


def _cmd_coupling_trace(args) -> int:
    spec = spec_from_document(_load_json(args.map))
    cert = _certificate_for(spec, args.r_floor)
    phi = _grid_observable(args.observable, args.scale, _check_grid(args.grid), spec.eta)
    phi.values -= integrate(phi)
    trace = run_coupling(spec, cert, phi, args.steps)
    emit_report(list(trace.rows()), "csv", _out_path(args, "coupling_trace.csv"))
    return 0


def _cmd_tower(args) -> int:
    tspec = _load_tower(args)
    tc = tspec.constants
    level_masses = [
        float(tspec.dist.mass_geq(level + 1)) / tc.tau_bar for level in range(tspec.n_levels)
    ]
    emit_report(
        {
            "constants": tc.as_dict(),
            "mixing": tspec.mixing,
            "L_max": tspec.L_max,
            "level_masses": level_masses,
        },
        "json",
        _out_path(args, "tower_constants.json"),
    )
    rows = [
        {"n": n, "t": tc.t(n), "p": tc.p(n)}
        for n in range(1, min(tc.horizon, args.rows) + 1)
    ]
    emit_report(rows, "csv", _out_path(args, "tower_sequences.csv"))
    print(json.dumps(tc.as_dict(), sort_keys=True, indent=2))
    return 0


def _cmd_tower_decay(args) -> int:
    tspec = _load_tower(args)
    grid = _check_grid(args.grid)
    phi = centered_indicator_level0(tspec, grid)
    n_max = args.steps if args.steps is not None else tspec.constants.N + 50
    l1, budgets = measure_decay(tspec, phi, n_max)
    sup = 1.0  # |1_{level0} - c| <= max(c, 1-c) <= 1
    norm = 1.0 + sup  # level metric makes the indicator 1-Hoelder
    rows = []
    for n in range(n_max + 1):
        bound = (
            tower_decay_bound(tspec, norm, n) if n >= tspec.constants.N else float("nan")
        )
        rows.append({"n": n, "measured": l1[n], "bound": bound, "budget": budgets[n]})
    emit_report(rows, "csv", _out_path(args, "tower_decay.csv"))
    return 0


def _cmd_tail(args) -> int:
    doc = _load_json(args.config)
    pseq = PSequence(
        p_minus1=float(doc["p_minus1"]),
        p0=float(doc["p0"]),
        p=np.asarray(doc.get("p", []), dtype=float),
        N=int(doc["N"]),
        tail_mass=float(doc.get("tail_mass", 0.0)),
    )
    law = _tail_law_from(doc.get("law"))
    if law is None:
        raise ConfigError("tail config needs a 'law' block")
    R = float(doc.get("R", 0.0))
    # the analytic chain needs p_n <= e^R * law(n); a hand-edited sequence
    # that escapes the declared envelope gets no valid bound
    ns = np.arange(1, pseq.p.size + 1)
    envelope = math.exp(R) * np.asarray(law.value(ns))
    bad = np.nonzero(pseq.p > envelope * (1.0 + 1e-9) + 1e-12)[0]
    if bad.size:
        n_bad = int(ns[bad[0]])
        raise NotDominated(
            n_bad,
            f"NotDominated: p_{n_bad} = {pseq.p[bad[0]]:.6g} exceeds "
            f"e^R law({n_bad}) = {envelope[bad[0]]:.6g}",
        )
    if isinstance(law, PolynomialTail):
        tb = poly_tail_bound(law.C_tau, law.beta, R, pseq.N, pseq.p_minus1)
    else:
        tb = stretched_tail_bound(law.C_tau, law.A, law.gamma, R, pseq.N, pseq.p_minus1)
    emp = sample_h(pseq, args.samples, args.seed, n_max=args.n_max)
    rows = [
        {
            "n": int(n),
            "empirical_tail": emp.tail[i],
            "wilson_upper": emp.wilson[i],
            "analytic_bound": float(tb.bound(n)),
        }
        for i, n in enumerate(emp.n)
    ]
    emit_report(rows, "csv", _out_path(args, "tail.csv"))
    emit_report(
        {"kind": tb.kind, "constants": tb.constants, "N": tb.N, "p_minus1": tb.p_minus1},
        "json",
        _out_path(args, "tail_constants.json"),
    )
    bad = [r for r in rows if r["empirical_tail"] > r["analytic_bound"]]
    if bad:
        raise InternalCheckError(
            f"empirical tail exceeds the analytic bound at n = {bad[0]['n']}"
        )
    return 0


def _cmd_nuh_bound(args) -> int:
    doc = _load_json(args.config)
    law = _tail_law_from(doc.get("law"))
    if law is None:
        raise ConfigError("nuh config needs a 'law' block")
    constants = nuh_constants(
        K=float(doc["K"]),
        theta=float(doc["theta"]),
        K0=float(doc["K0"]),
        eta=float(doc["eta"]),
        rho0=float(doc["rho0"]),
    )
    quot = doc.get("quotient")
    if quot is None:
        raise ConfigError("nuh config needs a 'quotient' block with R, N, p_minus1")
    R, N, pm1 = float(quot["R"]), int(quot["N"]), float(quot["p_minus1"])
    if isinstance(law, PolynomialTail):
        tb = poly_tail_bound(law.C_tau, law.beta, R, N, pm1)
    else:
        tb = stretched_tail_bound(law.C_tau, law.A, law.gamma, R, N, pm1)
    nuh_input = NUHInput(
        nuh=constants,
        eta=float(doc["eta"]),
        quotient_tail=QuotientDecay(tail=tb, N=N, R=R),
        tail_law=law,
        tau_bar=float(doc["tau_bar"]),
    )
    ns = np.unique(np.geomspace(6, args.n_max, num=args.rows).astype(int))
    rows = bound_rows(nuh_input, float(doc.get("v_norm", 1.0)), float(doc.get("w_norm", 1.0)), ns)
    emit_report(rows, "csv", _out_path(args, "nuh_bound.csv"))
    emit_report(
        {
            "constants": constants.as_dict(),
            "kappa_constants": kappa_constants(nuh_input),
            "tail_constants": tb.constants,
        },
        "json",
        _out_path(args, "nuh_constants.json"),
    )
    return 0


def _cmd_demo(args) -> int:
    """Golden examples end to end, with the cross-file dominance check."""
    print(f"corrdecay {__version__} demo")
    cert = ue_certificate(2.0, 1.0, 1.0)
    print(f"certificate(2,1,1): R={cert.R:g} xi={cert.xi:.9g} C={cert.C:.9g} gamma={cert.gamma:.9g}")

    base = doubling_spec()
    tau = np.array([1, 2])
    formal = ue_certificate(2.0, 0.0, 1.0)
    golden = build_tower(base, tau, cert=formal, allow_degenerate=True)
    tc = golden.constants
    print(
        "golden tower: "
        f"N1={tc.N1} N2={tc.N2} N={tc.N} eps={tc.eps:.12g} "
        f"p_minus1={tc.p_minus1:.12g} p0={tc.p0:.12g} p1={tc.p(1):.12g}"
    )
    emit_report(
        {"constants": tc.as_dict(), "p1": tc.p(1), "sum_p": tc.p_total()},
        "json",
        _out_path(args, "demo_golden_tower.json"),
    )

    # dynamics on the R-override tower: measured decay under the analytic bound
    over = override_certificate(2.0, 0.0, 1.0, r_floor=0.1)
    tower = build_tower(base, tau, tail_law=PolynomialTail(2.0, 2.0), cert=over)
    grid = _check_grid(args.grid)
    phi = centered_indicator_level0(tower, grid)
    n_max = tower.constants.N + 20
    l1, budgets = measure_decay(tower, phi, n_max)
    rows = []
    violations = 0
    for n in range(tower.constants.N, n_max + 1):
        bound = tower_decay_bound(tower, 2.0, n)
        rows.append({"n": n, "measured": l1[n], "bound": bound, "budget": budgets[n]})
        if l1[n] > bound:
            violations += 1
    emit_report(rows, "csv", _out_path(args, "demo_tower_decay.csv"))

    # Monte Carlo tail against the analytic curve
    pseq = tower.pseq()
    tb = poly_tail_bound(2.0, 2.0, over.R, tower.constants.N, pseq.p_minus1)
    emp = sample_h(pseq, args.samples, args.seed, n_max=100)
    tail_rows = [
        {
            "n": int(n),
            "empirical_tail": emp.tail[i],
            "wilson_upper": emp.wilson[i],
            "analytic_bound": float(tb.bound(n)),
        }
        for i, n in enumerate(emp.n)
    ]
    emit_report(tail_rows, "csv", _out_path(args, "demo_tail.csv"))
    violations += sum(1 for r in tail_rows if r["empirical_tail"] > r["analytic_bound"])

    if violations:
        raise InternalCheckError(f"{violations} dominance violations in demo outputs")
    print("demo: all analytic bounds dominate measured/empirical values")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corrdecay", description="explicit decay-of-correlations toolkit"
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, grid_default=4096):
        p.add_argument("--out", default=None, help="output directory (env CORRDECAY_OUTDIR)")
        p.add_argument("--grid", type=int, default=grid_default, help="grid size, power of two")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--r-floor", type=float, default=None, help="override R for the certificate")
        p.add_argument("--l-max", type=int, default=128)
        p.add_argument("--tol", type=float, default=1e-9)

    p = sub.add_parser("certificate", help="compute a decay certificate")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--K", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.set_defaults(func=_cmd_certificate)

    p = sub.add_parser("decay-ue", help="measured operator decay vs certificate bound")
    common(p)
    p.add_argument("--map", required=True)
    p.add_argument("--observable", default="x-minus-half")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--detailed", action="store_true")
    p.set_defaults(func=_cmd_decay_ue)

    p = sub.add_parser("invariant-density", help="fixed-point density and sandwich check")
    common(p)
    p.add_argument("--map", required=True)
    p.add_argument("--max-iter", type=int, default=4096)
    p.set_defaults(func=_cmd_invariant_density)

    p = sub.add_parser("coupling-trace", help="coupled evolution trace")
    common(p)
    p.add_argument("--map", required=True)
    p.add_argument("--observable", default="sin")
    p.add_argument("--scale", type=float, default=0.05)
    p.add_argument("--steps", type=int, default=20)
    p.set_defaults(func=_cmd_coupling_trace)

    p = sub.add_parser("tower", help="tower constants and coupling sequences")
    common(p)
    p.add_argument("--config", required=True)
    p.add_argument("--rows", type=int, default=64)
    p.set_defaults(func=_cmd_tower)

    p = sub.add_parser("tower-decay", help="measured tower decay vs analytic bound")
    common(p)
    p.add_argument("--config", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(func=_cmd_tower_decay)

    p = sub.add_parser("tail", help="Monte Carlo tail of h vs analytic bound")
    common(p)
    p.add_argument("--config", required=True)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--n-max", type=int, default=200)
    p.set_defaults(func=_cmd_tail)

    p = sub.add_parser("nuh-bound", help="hyperbolic correlation bound pipeline")
    common(p)
    p.add_argument("--config", required=True)
    p.add_argument("--n-max", type=int, default=10_000)
    p.add_argument("--rows", type=int, default=64)
    p.set_defaults(func=_cmd_nuh_bound)

    p = sub.add_parser("demo", help="golden examples end to end")
    common(p, grid_default=1024)
    p.add_argument("--samples", type=int, default=100_000)
    p.set_defaults(func=_cmd_demo)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except InternalCheckError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
