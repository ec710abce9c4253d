import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
import yaml
from loguru import logger
from pydantic import ValidationError

from comink.app.functional import (
    DEFAULT_CONFIG,
    BodyDocument,
    ConeDocument,
    MeasureDocument,
    SolutionDocument,
    get_config,
    read_document,
    write_document,
)
from comink.app.stability import run_stability
from comink.coconvex.cfull import bounds_report, coconvex_volume, hausdorff_cfull, surface_area_measure
from comink.cone.cone import Cone
from comink.errors import CominkError, NoConvergence
from comink.logger.logger import init_logger
from comink.measures.prokhorov import lp_distance
from comink.solver.examples import gen_boundary_blowup_measure, gen_orthant_example
from comink.solver.exhaustion import dyadic_margins, necessary_profile, solve_exhaustion
from comink.solver.minkowski import SolverOptions, solve


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _emit_frame(frame: pd.DataFrame, out: Optional[str]) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out, index=False)
        logger.info(f"Wrote {len(frame)} rows to {out}")
    else:
        _emit(frame.to_csv(index=False))


def _cone(args) -> Cone:
    return read_document(args.cone, ConeDocument).to_cone()


def _solver_options(args, config: Dict[str, Any]) -> SolverOptions:
    settings = dict(config.get("solver") or {})
    for key in ("tol", "max_iter", "seed"):
        if getattr(args, key, None) is not None:
            settings[key] = getattr(args, key)
    return SolverOptions(**settings)


# ==============================================================================
# Subcommands


def _cmd_solve(args, config) -> int:
    C = _cone(args)
    phi = read_document(args.measure, MeasureDocument).to_measure(C.dim)
    report = solve(C, phi, _solver_options(args, config))
    write_document(SolutionDocument.from_report(report, phi), args.out)
    if not report.converged:
        raise NoConvergence(f"Residual {report.residual_inf:.3e} after {report.iterations} iterations")
    return 0


def _cmd_sam(args, config) -> int:
    C = _cone(args)
    K = read_document(args.body, BodyDocument).to_cfull(C)
    write_document(MeasureDocument.from_measure(surface_area_measure(K)), args.out)
    return 0


def _cmd_lp_dist(args, config) -> int:
    mu = read_document(args.first, MeasureDocument).to_measure()
    nu = read_document(args.second, MeasureDocument).to_measure()
    _emit(f"{lp_distance(mu, nu):.12g}")
    return 0


def _cmd_hausdorff(args, config) -> int:
    C = _cone(args)
    K = read_document(args.first, BodyDocument).to_cfull(C)
    L = read_document(args.second, BodyDocument).to_cfull(C)
    _emit(f"{hausdorff_cfull(K, L):.12g}")
    return 0


def _cmd_volume(args, config) -> int:
    C = _cone(args)
    K = read_document(args.body, BodyDocument).to_cfull(C)
    methods = ["integral", "direct"] if args.method == "both" else [args.method]
    for method in methods:
        _emit(f"{method} {coconvex_volume(K, method):.12g}")
    return 0


def _cmd_bounds(args, config) -> int:
    C = _cone(args)
    K = read_document(args.body, BodyDocument).to_cfull(C)
    omega = K.normals if len(K.normals) else -C.w[None, :]
    _emit(bounds_report(K, omega, args.bound).model_dump_json(indent=2))
    return 0


def _cmd_exhaust(args, config) -> int:
    C = _cone(args)
    phi = read_document(args.measure, MeasureDocument).to_measure(C.dim)
    margins = [float(x) for x in args.margins.split(",") if x.strip()]
    stages = solve_exhaustion(C, phi, margins, _solver_options(args, config))
    _emit_frame(pd.DataFrame([stage.diagnostics.model_dump() for stage in stages]), args.out)
    return 0


def _cmd_stability(args, config) -> int:
    C = _cone(args)
    phi = read_document(args.measure, MeasureDocument).to_measure(C.dim)
    settings = config.get("stability") or {}
    result = run_stability(
        C,
        phi,
        jitter=args.jitter,
        trials=args.trials if args.trials is not None else int(settings.get("trials", 50)),
        seed=args.seed,
        rungs=args.rungs if args.rungs is not None else int(settings.get("rungs", 6)),
        opts=_solver_options(args, config),
    )
    frame = result.to_frame()
    if args.out:
        _emit_frame(frame, args.out)
    else:
        _emit(frame.to_csv(index=False))
    _emit(f"c_hat {result.c_hat:.12g}")
    _emit(f"slope {'nan' if result.slope is None else format(result.slope, '.12g')}")
    return 0


def _cmd_orthant_series(args, config) -> int:
    example = gen_orthant_example(args.n, hull_check=min(args.n, 200))
    _emit(f"paper_series {example.slantless_series:.12g}")
    _emit(f"slantless_series {example.slantless_series:.12g}")
    _emit(f"exact_series {example.exact_series:.12g}")
    _emit(f"discrepancy {example.exact_series - example.slantless_series:.12g}")
    return 0


def _cmd_necessary_profile(args, config) -> int:
    C = _cone(args)
    phi = read_document(args.measure, MeasureDocument).to_measure(C.dim)
    profile = necessary_profile(phi, C, dyadic_margins(args.decades))
    if args.out:
        _emit_frame(pd.DataFrame([entry.model_dump() for entry in profile.entries]), args.out)
        _emit(f"unbounded_suspect {profile.unbounded_suspect}")
    else:
        _emit(profile.model_dump_json(indent=2))
    return 0


def _cmd_blowup(args, config) -> int:
    C = _cone(args)
    write_document(MeasureDocument.from_measure(gen_boundary_blowup_measure(C, args.count)), args.out)
    return 0


# ==============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="comink", description="Discrete Minkowski problem for C-coconvex sets"
    )
    parser.add_argument("--config", dest="config", default=None, help="Path to the YAML configuration")
    parser.add_argument(
        "--log-level", dest="log_level", default=None, help="Minimum log level, overrides the configuration"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def solver_flags(p):
        p.add_argument("--tol", type=float, default=None, help="Residual tolerance")
        p.add_argument("--max-iter", dest="max_iter", type=int, default=None, help="Iteration limit")
        p.add_argument("--seed", type=int, default=None, help="Seed of the initial perturbation")

    p = sub.add_parser("solve", help="Solve the Minkowski problem for a measure")
    p.add_argument("--cone", required=True)
    p.add_argument("--measure", required=True)
    p.add_argument("--out", required=True)
    solver_flags(p)
    p.set_defaults(handler=_cmd_solve)

    p = sub.add_parser("sam", help="Surface area measure of a body")
    p.add_argument("--cone", required=True)
    p.add_argument("--body", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_sam)

    p = sub.add_parser("lp-dist", help="Lévy–Prokhorov distance of two measures")
    p.add_argument("first")
    p.add_argument("second")
    p.set_defaults(handler=_cmd_lp_dist)

    p = sub.add_parser("hausdorff", help="Hausdorff distance of two bodies")
    p.add_argument("--cone", required=True)
    p.add_argument("first")
    p.add_argument("second")
    p.set_defaults(handler=_cmd_hausdorff)

    p = sub.add_parser("volume", help="Coconvex volume of a body")
    p.add_argument("--cone", required=True)
    p.add_argument("--body", required=True)
    p.add_argument("--method", choices=["integral", "direct", "both"], default="integral")
    p.set_defaults(handler=_cmd_volume)

    p = sub.add_parser("bounds", help="Clearance and support bounds of a body")
    p.add_argument("--cone", required=True)
    p.add_argument("--body", required=True)
    p.add_argument("--bound", type=float, required=True)
    p.set_defaults(handler=_cmd_bounds)

    p = sub.add_parser("exhaust", help="Solve on increasing restrictions of a measure")
    p.add_argument("--cone", required=True)
    p.add_argument("--measure", required=True)
    p.add_argument("--margins", required=True, help="Comma separated decreasing margins")
    p.add_argument("--out", default=None)
    solver_flags(p)
    p.set_defaults(handler=_cmd_exhaust)

    p = sub.add_parser("stability", help="Stability experiment on a jitter ladder")
    p.add_argument("--cone", required=True)
    p.add_argument("--measure", required=True)
    p.add_argument("--jitter", type=float, required=True)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--rungs", type=int, default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_cmd_stability, tol=None, max_iter=None)

    p = sub.add_parser("orthant-series", help="Partial sums of the octant example")
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(handler=_cmd_orthant_series)

    p = sub.add_parser("necessary-profile", help="Boundary profile of a measure")
    p.add_argument("--cone", required=True)
    p.add_argument("--measure", required=True)
    p.add_argument("--decades", type=int, default=4)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_cmd_necessary_profile)

    p = sub.add_parser("blowup", help="Measure violating the boundary growth condition")
    p.add_argument("--cone", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_blowup)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    args = build_parser().parse_args(argv)

    try:
        config_path = Path(args.config) if args.config else DEFAULT_CONFIG
        config = get_config(config_path) if args.config or config_path.exists() else {}
    except (FileNotFoundError, yaml.YAMLError) as e:
        init_logger()
        logger.error(str(e))
        return 2

    log_settings = dict(config.get("logging") or {})
    if args.log_level:
        log_settings["level"] = args.log_level.upper()
    if "logfolder_path" in log_settings:
        log_settings["logfolder_path"] = Path(log_settings["logfolder_path"])
    init_logger(**log_settings)

    try:
        return args.handler(args, config)
    except CominkError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except (ValidationError, FileNotFoundError, ValueError) as e:
        logger.error(f"Invalid input: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
