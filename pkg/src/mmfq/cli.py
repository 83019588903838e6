"""Command-line interface.

One verb per module: validate | psi | perturb | density | case | simulate.
Exit codes: 0 success, 1 domain error, 2 usage or I/O error.  Domain
errors are reported as one-line JSON objects on stderr.  Every output
file is accompanied by a ``<name>.manifest.json`` with the command line,
resolved options and solver diagnostics; JSON outputs embed the manifest
instead.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, bench, density, perturb, simulate
from .core import load_model, mean_drift, stationary_phase_dist
from .errors import FluidQueueError, UnknownCase
from .riccati import DEFAULT_MAX_NEWTON, DEFAULT_TOL, solve_psi, solve_psi_at


def _f17(x: float) -> str:
    return f"{float(x):.17g}"


def _f3(x: float) -> str:
    return f"{float(x):.3g}"


@dataclass
class RunManifest:
    command: list[str]
    inputs: list[str]
    options: dict
    version: str = __version__
    wall_time_s: float = 0.0
    diagnostics: dict = field(default_factory=dict)


def _write_output(path: str | None, body: str, manifest: RunManifest,
                  as_json: bool = False, payload: dict | None = None) -> None:
    """Write body (CSV) or payload (JSON with embedded manifest)."""
    if as_json:
        doc = dict(payload or {})
        doc["manifest"] = asdict(manifest)
        text = json.dumps(doc, indent=2)
        if path:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        else:
            print(text)
        return
    if path:
        with open(path, "w") as fh:
            fh.write(body)
        with open(path + ".manifest.json", "w") as fh:
            json.dump(asdict(manifest), fh, indent=2)
            fh.write("\n")
    else:
        sys.stdout.write(body)


def _grid(spec: str, log: bool) -> np.ndarray:
    try:
        a, b, n = spec.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {spec!r}, expected A:B:N") from exc
    if n < 1 or a <= 0 and log:
        raise argparse.ArgumentTypeError(f"bad grid {spec!r}")
    if log:
        return np.logspace(np.log10(a), np.log10(b), n)
    return np.linspace(a, b, n)


def cmd_validate(args) -> int:
    model = load_model(args.model)
    xi = model.unpermute(stationary_phase_dist(model))
    drift = mean_drift(model)
    report = {
        "phases": model.n,
        "labels": list(model.labels),
        "partition": {
            "plus": [model.labels[i] for i in model.perm[model.ip]],
            "zero": [model.labels[i] for i in model.perm[model.i0]],
            "minus": [model.labels[i] for i in model.perm[model.im]],
        },
        "stationary": [float(v) for v in xi],
        "drift": drift,
        "recurrent": drift < 0,
    }
    print(json.dumps(report, indent=2))
    return 0


def _matrix_csv(sections) -> str:
    lines = ["matrix,row,col,value"]
    for name, M, rows, cols in sections:
        for i, r in enumerate(rows):
            for j, c in enumerate(cols):
                lines.append(f"{name},{r},{c},{_f17(M[i, j])}")
    return "\n".join(lines) + "\n"


def cmd_psi(args) -> int:
    t0 = time.perf_counter()
    model = load_model(args.model)
    sol = solve_psi(model, tol=args.tol, max_newton=args.max_newton)
    labels = model.canonical_labels()
    up = [labels[i] for i in model.ip]
    down = [labels[i] for i in model.im]
    manifest = RunManifest(
        command=sys.argv[1:], inputs=[args.model],
        options={"tol": args.tol, "max_newton": args.max_newton},
        wall_time_s=time.perf_counter() - t0,
        diagnostics={"iterations": sol.iterations, "residual": sol.residual,
                     "row_sum_defect": float(np.abs(sol.psi.sum(axis=1) - 1).max())})
    if args.json:
        payload = {"psi": sol.psi.tolist(), "U": sol.U.tolist(), "K": sol.K.tolist(),
                   "up_phases": up, "down_phases": down,
                   "iterations": sol.iterations, "residual": sol.residual}
        _write_output(args.out, "", manifest, as_json=True, payload=payload)
    else:
        body = _matrix_csv([("psi", sol.psi, up, down),
                            ("U", sol.U, down, down),
                            ("K", sol.K, up, up)])
        _write_output(args.out, body, manifest)
    return 0


def cmd_perturb(args) -> int:
    t0 = time.perf_counter()
    model = load_model(args.model)
    spec = perturb.load_perturbation(args.pert, model)
    sol = solve_psi(model, tol=args.tol)
    expansion = perturb.expand(model, sol, spec)
    payload = {
        "regime": expansion.regime,
        "row_phases": [model.labels[i] for i in expansion.row_phases],
        "col_phases": [model.labels[i] for i in expansion.col_phases],
        "psi_bar": expansion.psi_bar.tolist(),
        "psi1": expansion.psi1.tolist(),
        "aux_blocks": sorted(k for k in expansion.aux if k != "series"),
    }
    checks = {}
    for eps in args.eps_check or []:
        psi_eps, pmodel = solve_psi_at(model, spec, eps, tol=args.tol)
        norms = bench.error_norms(model, psi_eps, pmodel, expansion, eps)
        checks[_f17(eps)] = {k: v for k, v in asdict(norms).items()
                             if v is not None}
    if checks:
        payload["eps_check"] = checks
    manifest = RunManifest(
        command=sys.argv[1:], inputs=[args.model, args.pert],
        options={"tol": args.tol, "eps_check": args.eps_check or []},
        wall_time_s=time.perf_counter() - t0,
        diagnostics={"iterations": sol.iterations, "residual": sol.residual})
    _write_output(args.out, "", manifest, as_json=True, payload=payload)
    return 0


def cmd_density(args) -> int:
    t0 = time.perf_counter()
    model = load_model(args.model)
    sol = solve_psi(model, tol=args.tol)
    law = density.stationary_law(model, sol)
    fol = None
    if args.pert:
        spec = perturb.load_perturbation(args.pert, model)
        density.require_generator_kind(spec)
        psi1 = perturb.psi1_generator(model, sol, spec.direction)
        fol = density.first_order_law(model, sol, spec.direction, psi1)
    xs = _grid(args.x, log=False)
    header = ["x"] + [f"pi_{lab}" for lab in model.labels]
    if fol is not None:
        header += [f"pi1_{lab}" for lab in model.labels]
    lines = [",".join(header)]
    for x in xs:
        row = [ _f17(x) ] + [_f17(v) for v in density.density_at(law, sol.psi, model, x)]
        if fol is not None:
            row += [_f17(v) for v in
                    density.density1_at(fol, law, model, sol.psi, psi1, x)]
        lines.append(",".join(row))
    body = "\n".join(lines) + "\n"
    manifest = RunManifest(
        command=sys.argv[1:], inputs=[p for p in (args.model, args.pert) if p],
        options={"x": args.x, "tol": args.tol},
        wall_time_s=time.perf_counter() - t0,
        diagnostics={"zero_mass": density.zero_mass(law, model).tolist(),
                     "drift": mean_drift(model)})
    _write_output(args.out, body, manifest)
    return 0


def cmd_case(args) -> int:
    t0 = time.perf_counter()
    grid = _grid(args.eps_grid, log=True) if args.eps_grid else None
    result = bench.run_case(args.id, grid)
    lines = ["case_id,eps,e_plus,e_oplus,e_inf,e_minus,e_ominus,slope,r_squared"]
    for i, eps in enumerate(result.eps_grid):
        cells = [result.case_id, _f17(eps), _f17(result.e_plus[i]),
                 _f17(result.e_oplus[i]) if result.e_oplus is not None else "",
                 _f17(result.e_inf[i]),
                 _f17(result.e_minus[i]) if result.e_minus is not None else "",
                 _f17(result.e_ominus[i]) if result.e_ominus is not None else "",
                 _f17(result.slope), _f17(result.r_squared)]
        lines.append(",".join(cells))
    body = "\n".join(lines) + "\n"

    summary = [f"case {result.case_id}: r_minus={_f3(result.r_minus)} "
               f"drift={_f3(result.drift)} slope={result.slope:.3f} "
               f"R^2={result.r_squared:.4f}"]
    reference = bench.REFERENCE_NORMS[result.case_id]
    for eps_ref, cells in reference.items():
        idx = int(np.argmin(np.abs(result.eps_grid - eps_ref)))
        close = abs(result.eps_grid[idx] - eps_ref) <= 1e-12 * eps_ref
        for key, ref in cells.items():
            got = {"e_plus": result.e_plus,
                   "e_oplus": result.e_oplus,
                   "e_inf": result.e_inf}[key]
            if got is None or not close:
                summary.append(f"  {key}({_f3(eps_ref)}): reference {_f3(ref)} "
                               "(grid point not evaluated)")
                continue
            val = got[idx]
            ok = abs(val - ref) <= 0.02 * ref
            summary.append(f"  {key}({_f3(eps_ref)}) = {_f3(val)} "
                           f"reference {_f3(ref)} "
                           f"{'PASS' if ok else 'FAIL'} (2% relative)")
    print("\n".join(summary))
    manifest = RunManifest(
        command=sys.argv[1:], inputs=[],
        options={"id": args.id, "eps_grid": args.eps_grid},
        wall_time_s=time.perf_counter() - t0,
        diagnostics={"slope": result.slope, "r_squared": result.r_squared,
                     "r_minus": result.r_minus, "drift": result.drift})
    _write_output(args.out, body, manifest)
    return 0


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    model = load_model(args.model)
    cfg = simulate.SimConfig(replications=args.replications, seed=args.seed,
                             max_time=args.max_time)
    est = simulate.estimate_psi(model, cfg)
    labels = model.canonical_labels()
    up = [labels[i] for i in model.ip]
    down = [labels[i] for i in model.im]
    lines = ["start,hit,estimate,stderr"]
    for i, r in enumerate(up):
        for j, c in enumerate(down):
            lines.append(f"{r},{c},{_f17(est.estimate[i, j])},{_f17(est.stderr[i, j])}")
    body = "\n".join(lines) + "\n"
    manifest = RunManifest(
        command=sys.argv[1:], inputs=[args.model],
        options={"replications": args.replications, "seed": args.seed,
                 "max_time": args.max_time},
        wall_time_s=time.perf_counter() - t0,
        diagnostics={"censored_fraction": est.censored_fraction})
    _write_output(args.out, body, manifest)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmfq",
                                description="Markov-modulated fluid queue toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="validate a model file")
    v.add_argument("model")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("psi", help="first-return matrix and U, K")
    s.add_argument("model")
    s.add_argument("--tol", type=float, default=DEFAULT_TOL)
    s.add_argument("--max-newton", type=int, default=DEFAULT_MAX_NEWTON)
    s.add_argument("--out")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_psi)

    pe = sub.add_parser("perturb", help="first-order expansion of psi")
    pe.add_argument("model")
    pe.add_argument("pert")
    pe.add_argument("--tol", type=float, default=DEFAULT_TOL)
    pe.add_argument("--eps-check", type=float, nargs="*")
    pe.add_argument("--out")
    pe.set_defaults(func=cmd_perturb)

    d = sub.add_parser("density", help="stationary density on a level grid")
    d.add_argument("model")
    d.add_argument("--pert")
    d.add_argument("--x", required=True, help="grid A:B:N (linear)")
    d.add_argument("--tol", type=float, default=DEFAULT_TOL)
    d.add_argument("--out")
    d.set_defaults(func=cmd_density)

    c = sub.add_parser("case", help="run one benchmark case")
    c.add_argument("--id", required=True)
    c.add_argument("--eps-grid", help="grid A:B:N (log-spaced)")
    c.add_argument("--out")
    c.set_defaults(func=cmd_case)

    si = sub.add_parser("simulate", help="Monte Carlo estimate of psi")
    si.add_argument("model")
    si.add_argument("--replications", type=int, default=10000)
    si.add_argument("--seed", type=int, default=0)
    si.add_argument("--max-time", type=float, default=1e4)
    si.add_argument("--out")
    si.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UnknownCase as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 2
    except FluidQueueError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except argparse.ArgumentTypeError as exc:
        print(json.dumps({"error": "Usage", "message": str(exc)}), file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": "IO", "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
