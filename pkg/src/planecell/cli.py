"""Command line entry point: ``planecell <command> --config run.json``.

Exit codes: 0 success, 1 numerical failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .descent import DescentParams, check_birkhoff, solve
from .energy import JumpConfig, SweepResult, fit_power_law, jump_estimate, sweep
from .errors import NonConvergence, PlanecellError
from .grid import TorusSpec
from .heteroclinic import analytic_jump, build_profile, dAe_quadrature, kinetic_jump_integral
from .io import write_csv, write_field, write_json
from .lindstedt import analyze_resonance, build_series, eval_series, minimal_torus, series_norms
from .descent import residual as descent_residual
from .potential import PotentialSpec

log = logging.getLogger("planecell")

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    potential: PotentialSpec
    omega_numerators: tuple[int, ...]
    omega_denominator: int
    torus: TorusSpec
    descent: DescentParams = field(default_factory=DescentParams)
    epsilon: float = 0.01
    sweep: tuple[float, ...] = ()
    direction: int = 0
    series_order: int = 3
    alpha: float | None = None
    curvature_correction: bool = False
    warm_start: bool = False
    seed: int = 0
    output_dir: str = "out"
    echo: dict = field(default_factory=dict, repr=False)

    @property
    def omega(self) -> tuple[float, ...]:
        return tuple(n / self.omega_denominator for n in self.omega_numerators)

    def jump_config(self) -> JumpConfig:
        return JumpConfig(
            potential=self.potential,
            torus=self.torus,
            descent=self.descent,
            alpha=self.alpha,
            curvature_correction=self.curvature_correction,
        )

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        try:
            potential = PotentialSpec.from_dict(data["potential"])
            torus = TorusSpec(**data["torus"])
            descent = DescentParams(**data.get("descent", {}))
            om = data["omega"]
            nums = tuple(int(v) for v in om["numerators"])
            den = int(om.get("denominator", torus.N))
        except KeyError as exc:
            raise ConfigError(f"missing config field {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if den <= 0:
            raise ConfigError("omega denominator must be positive")
        if len(nums) != torus.d:
            raise ConfigError(f"omega has {len(nums)} components but the torus has d={torus.d}")
        if potential.d != torus.d:
            raise ConfigError(f"potential dimension {potential.d} does not match torus d={torus.d}")
        if any((torus.N * n) % den for n in nums):
            raise ConfigError(
                f"incommensurate rotation vector: {list(nums)}/{den} times N={torus.N} is not integral"
            )
        highest = max(abs(v) for t in potential.terms for v in t.p)
        if torus.nodes_per_unit <= 2 * highest:
            raise ConfigError(
                f"torus has {torus.nodes_per_unit} nodes per unit length; the potential needs more than {2 * highest}"
            )
        sweep_eps = tuple(float(e) for e in data.get("sweep", ()))
        if any(e < 0 for e in sweep_eps) or list(sweep_eps) != sorted(sweep_eps):
            raise ConfigError("sweep must be a sorted list of nonnegative epsilons")
        direction = int(data.get("direction", 0))
        if not 0 <= direction < torus.d:
            raise ConfigError(f"direction {direction} out of range for d={torus.d}")
        order = int(data.get("series_order", 3))
        if not 1 <= order <= 12:
            raise ConfigError("series_order must lie in [1, 12]")
        eps = float(data.get("epsilon", 0.01))
        if eps < 0:
            raise ConfigError("epsilon must be nonnegative")
        alpha = data.get("alpha")
        return cls(
            potential=potential,
            omega_numerators=nums,
            omega_denominator=den,
            torus=torus,
            descent=descent,
            epsilon=eps,
            sweep=sweep_eps,
            direction=direction,
            series_order=order,
            alpha=None if alpha is None else float(alpha),
            curvature_correction=bool(data.get("curvature_correction", False)),
            warm_start=bool(data.get("warm_start", False)),
            seed=int(data.get("seed", 0)),
            output_dir=str(data.get("output_dir", "out")),
            echo=copy.deepcopy(data),
        )


def apply_override(data: dict, assignment: str) -> None:
    """Apply ``a.b.c=value``; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = data
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {key!r} crosses a non-object")
    node[parts[-1]] = value


def load_config(path, overrides=()) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for item in overrides:
        apply_override(data, item)
    return RunConfig.from_dict(data)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _workers() -> int:
    cap = os.environ.get("PLANECELL_THREADS")
    return max(1, int(cap)) if cap else 1


def _initial_alpha(cfg: RunConfig, omega) -> float:
    if cfg.alpha is not None:
        return cfg.alpha
    probe = minimal_torus(omega, cfg.torus.nodes_per_unit)
    return analyze_resonance(cfg.potential, omega, torus=probe, require_twist=False).minimizing_root()


def cmd_solve(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    omega = cfg.omega
    alpha = _initial_alpha(cfg, omega) if cfg.epsilon > 0 else 0.0
    try:
        sol = solve(omega, cfg.epsilon, cfg.potential, cfg.descent, z0=alpha, torus=cfg.torus, record_trace=True)
    except NonConvergence as exc:
        write_csv(out / "trace.csv", ["iteration", "residual", "energy"], exc.trace, cfg.echo)
        if exc.z is not None:
            write_field(out / "last_iterate.bin", exc.z, cfg.epsilon, omega, cfg.echo)
        raise
    write_field(out / "solution.bin", sol.z, cfg.epsilon, omega, cfg.echo)
    write_csv(out / "trace.csv", ["iteration", "residual", "energy"], sol.trace, cfg.echo)
    report = check_birkhoff(sol, 1)
    rows = [(*k, l, sign) for k, l, sign in report.rows()]
    cols = [f"k{i + 1}" for i in range(cfg.torus.d)] + ["l", "sign"]
    write_csv(out / "birkhoff.csv", cols, rows, cfg.echo)
    write_json(
        out / "solution.json",
        {
            "omega": list(omega),
            "epsilon": cfg.epsilon,
            "alpha0": alpha,
            "energy": sol.energy,
            "residual_linf": sol.residual_linf,
            "iterations": sol.iterations,
            "stop_reason": sol.stop_reason,
            "converged": sol.converged,
            "birkhoff_mixed": len(report.mixed),
        },
        cfg.echo,
    )
    print(f"energy {sol.energy!r} residual {sol.residual_linf:.3e} iterations {sol.iterations}")
    return EXIT_OK


def _jump_job(args):
    omega, eps, j, jcfg = args
    try:
        rec = jump_estimate(omega, eps, j, jcfg)
        rec.solutions = None
        return eps, rec, None
    except NonConvergence as exc:
        return eps, None, f"{exc.tag}: {exc}"


def run_sweep(cfg: RunConfig, epsilons) -> SweepResult:
    jcfg = cfg.jump_config()
    workers = _workers()
    if cfg.warm_start or workers == 1 or len(epsilons) < 2:
        return sweep(cfg.omega, epsilons, cfg.direction, jcfg, warm_start=cfg.warm_start)
    jobs = [(cfg.omega, e, cfg.direction, jcfg) for e in epsilons]
    result = SweepResult([])
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for eps, rec, err in pool.map(_jump_job, jobs):
            if rec is None:
                result.failures.append((eps, err))
            else:
                result.records.append(rec)
    return result


SWEEP_COLUMNS = [
    "epsilon", "A_center", "A_plus", "A_minus", "dplus", "dminus", "jump", "residual_max", "iters_total",
]


def cmd_jump_sweep(cfg: RunConfig) -> int:
    if not cfg.sweep or any(e <= 0 for e in cfg.sweep):
        raise ConfigError("jump-sweep needs a non-empty list of positive epsilons")
    out = _outdir(cfg)
    result = run_sweep(cfg, list(cfg.sweep))
    rows = [
        (r.epsilon, r.A_center, r.A_plus, r.A_minus, r.dplus, r.dminus, r.jump, r.residual_max, r.iters_total)
        for r in result.records
    ]
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows, cfg.echo)
    positive = [r for r in result.records if r.jump > 0]
    fit = fit_power_law(positive).to_dict() if len(positive) >= 3 else None
    write_json(
        out / "fit.json",
        {"fit": fit, "failures": [{"epsilon": e, "error": msg} for e, msg in result.failures]},
        cfg.echo,
    )
    loglog = [(float(np.log(r.epsilon)), float(np.log(r.jump))) for r in positive]
    write_csv(out / "loglog.dat", ["log_epsilon", "log_jump"], loglog, cfg.echo)
    if fit:
        print(f"C {fit['C']!r} p {fit['p']!r} rms {fit['rms']!r} points {fit['points']}")
    if result.failures:
        for eps, msg in result.failures:
            print(f"eps={eps}: {msg}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def series_residual(series, epsilon, spec) -> float:
    val = eval_series(series, epsilon)
    return descent_residual(val.corrector(), series.omega, epsilon, spec)


def order_check(series, epsilons, spec) -> tuple[list[tuple[float, float]], float]:
    """Residuals of the truncated series and their log-log slope in epsilon."""
    rows = [(e, series_residual(series, e, spec)) for e in epsilons]
    x = np.log([e for e, _ in rows])
    y = np.log([r for _, r in rows])
    slope = float(np.polyfit(x, y, 1)[0]) if len(rows) >= 2 else float("nan")
    return rows, slope


def cmd_lindstedt(cfg: RunConfig) -> int:
    eps_list = [e for e in cfg.sweep if e > 0]
    if not eps_list:
        raise ConfigError("lindstedt needs a non-empty sweep list for the order check")
    out = _outdir(cfg)
    omega = cfg.omega
    probe = minimal_torus(omega, cfg.torus.nodes_per_unit)
    analysis = analyze_resonance(cfg.potential, omega, torus=probe)
    payload = analysis.to_dict()
    if analysis.resonance_order is None:
        payload["note"] = "no resonance within probe depth; series not built"
        write_json(out / "resonance.json", payload, cfg.echo)
        return EXIT_OK
    alpha = analysis.minimizing_root() if cfg.alpha is None else cfg.alpha
    series = build_series(cfg.potential, omega, alpha, cfg.series_order, cfg.torus)
    norms = series_norms(series)
    write_csv(
        out / "series_norms.csv",
        ["order", "linf", "l2", "lambda"],
        [(r["order"], r["linf"], r["l2"], r["lambda"]) for r in norms],
        cfg.echo,
    )
    rows, slope = order_check(series, eps_list, cfg.potential)
    write_csv(out / "order_check.csv", ["epsilon", "residual"], rows, cfg.echo)
    payload.update(
        {
            "alpha": alpha,
            "series_order": cfg.series_order,
            "last_lambda_closed": series.last_lambda_closed,
            "order_check_slope": slope,
        }
    )
    write_json(out / "resonance.json", payload, cfg.echo)
    print(f"j* {analysis.resonance_order} roots {analysis.roots} order-check slope {slope:.3f}")
    return EXIT_OK


def _series_for_heteroclinic(cfg: RunConfig):
    omega = cfg.omega
    torus = minimal_torus(omega, cfg.torus.nodes_per_unit)
    analysis = analyze_resonance(cfg.potential, omega, torus=torus)
    alpha = analysis.minimizing_root()
    return build_series(cfg.potential, omega, alpha, max(cfg.series_order, 2), torus)


def _require_product_cos(cfg: RunConfig):
    if cfg.potential.kind != "product_cos" or cfg.potential.amplitude != 1.0:
        raise ConfigError("this command needs the product_cos potential with unit amplitude")
    if tuple(int(v) for v in np.rint(cfg.omega)) != cfg.potential.k or not np.allclose(cfg.omega, cfg.potential.k):
        raise ConfigError("this command needs omega = k (first-order resonance)")


def _gap(a: float, b: float) -> float:
    if b == 0:
        return 0.0 if a == 0 else float("inf")
    return abs(a - b) / abs(b)


def cmd_heteroclinic(cfg: RunConfig) -> int:
    _require_product_cos(cfg)
    out = _outdir(cfg)
    eta = np.eye(cfg.torus.d)[cfg.direction]
    eps_list = [e for e in cfg.sweep if e > 0] or [cfg.epsilon]
    profile = build_profile(eps_list[0], eta)
    write_csv(out / "profile.csv", ["s", "alpha"], zip(profile.s, profile.samples), cfg.echo)
    series = _series_for_heteroclinic(cfg)
    rows, details = [], []
    for eps in eps_list:
        res = dAe_quadrature(eps, cfg.direction, cfg.potential, series)
        ana = analytic_jump(eps)
        rows.append((eps, res.dplus, res.dminus, ana, res.jump, _gap(res.jump, ana)))
        details.append(
            {
                "epsilon": eps,
                "kinetic": res.kinetic,
                "potential": res.potential,
                "kinetic_integral": kinetic_jump_integral(eps),
                "tail": res.tail,
            }
        )
    write_csv(
        out / "heteroclinic.csv",
        ["epsilon", "dplus", "dminus", "jump_analytic", "jump_numeric", "relative_gap"],
        rows,
        cfg.echo,
    )
    write_json(
        out / "heteroclinic.json",
        {"ode_residual": profile.ode_residual, "profile_tail_error": profile.tail_error, "points": details},
        cfg.echo,
    )
    return EXIT_OK


COMPARE_COLUMNS = [
    "epsilon", "jump_numeric", "jump_analytic", "jump_dae",
    "gap_numeric_analytic", "gap_dae_analytic", "gap_numeric_dae",
]


def cmd_compare(cfg: RunConfig) -> int:
    _require_product_cos(cfg)
    if not cfg.sweep:
        raise ConfigError("compare needs a non-empty sweep list")
    out = _outdir(cfg)
    series = _series_for_heteroclinic(cfg)
    positive = [e for e in cfg.sweep if e > 0]
    result = run_sweep(cfg, positive) if positive else SweepResult([])
    numeric = {r.epsilon: r.jump for r in result.records}
    rows = []
    for eps in cfg.sweep:
        if eps == 0:
            # A_0 is exactly quadratic, so the curvature-corrected difference is exact
            jcfg = cfg.jump_config()
            jcfg.curvature_correction = True
            num = jump_estimate(cfg.omega, 0.0, cfg.direction, jcfg).jump
            rows.append((0.0, num, 0.0, 0.0, 0.0, 0.0, 0.0))
            continue
        if eps not in numeric:
            continue
        num = numeric[eps]
        ana = float(analytic_jump(eps))
        dae = dAe_quadrature(eps, cfg.direction, cfg.potential, series).jump
        rows.append((eps, num, ana, dae, _gap(num, ana), _gap(dae, ana), _gap(num, dae)))
    write_csv(out / "compare.csv", COMPARE_COLUMNS, rows, cfg.echo)
    if result.failures:
        for eps, msg in result.failures:
            print(f"eps={eps}: {msg}", file=sys.stderr)
        return EXIT_NUMERIC
    worst = max((max(r[4], r[5], r[6]) for r in rows), default=0.0)
    print(f"largest relative gap {worst:.4f}")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "jump-sweep": cmd_jump_sweep,
    "lindstedt": cmd_lindstedt,
    "heteroclinic": cmd_heteroclinic,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planecell", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field by dotted path (repeatable)")
        p.add_argument("--output-dir", help="shorthand for --set output_dir=...")
    return parser


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}, sort_keys=True), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    overrides = list(args.overrides)
    if args.output_dir:
        overrides.append(f"output_dir={json.dumps(args.output_dir)}")
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        _emit_error("ConfigError", str(exc))
        return EXIT_CONFIG
    except PlanecellError as exc:
        _emit_error(type(exc).__name__, str(exc))
        if isinstance(exc, NonConvergence):
            try:
                write_json(
                    Path(cfg.output_dir) / "error.json",
                    {"error": "NonConvergence", "message": str(exc), "residual": exc.residual, "tag": exc.tag},
                    cfg.echo,
                )
            except OSError:
                pass
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
