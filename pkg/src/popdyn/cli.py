"""Command-line driver: simulate, verify, bound, and repro subcommands.

Exit codes: 0 success, 1 usage or configuration error, 2 simulation reached
the horizon without converging, 3 verification or reproduction thresholds
failed.  Output files (trajectory CSV, JSON reports) are byte-deterministic
for fixed flags and seed.  The environment variable ``POPDYN_OUT_DIR``
supplies the default output root.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import core, dynamics, equilibrium, games
from .core import (
    ConfigurationError,
    DualState,
    GameSpec,
    PrimalState,
    UnsupportedOperationError,
)
from .dynamics import PROTOCOLS, IntegrationDivergedError, SimParams, Trajectory
from .equilibrium import InfeasibleInstanceError, SlaterViolationError
from .lyapunov import QuadratureError, monotonicity_audit

# thresholds used by the repro subcommand
AUDIT_TOL = 1e-8
AUDIT_FRACTION = 0.999
REPORT_TOL = 1e-3
ORACLE_RESOLUTION = 200
ORACLE_REFINE_ITERS = 2000
RPS_TARGET = (0.313, 0.044, 0.643)

_EXIT_OK = 0
_EXIT_USAGE = 1
_EXIT_NO_CONVERGENCE = 2
_EXIT_THRESHOLDS = 3


class _CliError(Exception):
    """Usage-level problem; rendered to stderr with exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; route through _CliError so
    # the exit-code contract (1 = usage error) holds
    def error(self, message):
        raise _CliError(f"{self.prog}: {message}")


def _out_root() -> str:
    return os.environ.get("POPDYN_OUT_DIR", ".")


# ---------------------------------------------------------------------------
# game sources


def _resolve_game(source: str) -> GameSpec:
    if source in games.BUILTIN_GAMES:
        return games.builtin_game(source)
    if os.path.exists(source):
        return _load_game_file(source)
    known = ", ".join(sorted(games.BUILTIN_GAMES))
    raise ConfigurationError(
        f"unknown game {source!r}: neither a builtin name ({known}) nor an existing file"
    )


def _load_game_file(path: str) -> GameSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    try:
        return _game_from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise ConfigurationError(f"{path}: {exc}") from exc
        raise ConfigurationError(f"{path}: malformed game description ({exc})") from exc


def _game_from_dict(data: dict) -> GameSpec:
    fit = data.get("fitness")
    if not isinstance(fit, dict) or "type" not in fit:
        raise ConfigurationError('"fitness" must be an object with a "type"')
    ftype = fit["type"]

    if ftype == "builtin":
        game = games.builtin_game(fit["name"])
        for key, value in (
            ("n", game.n),
            ("q", game.q),
            ("primal_mass", game.primal_mass),
            ("dual_mass", game.dual_mass),
        ):
            if key in data and data[key] != value:
                raise ConfigurationError(
                    f'"{key}" is {data[key]} but builtin {fit["name"]!r} has {value}'
                )
        if data.get("constraints"):
            raise ConfigurationError("builtin games carry their own constraints")
        return game

    n = int(data["n"])
    primal_mass = float(data["primal_mass"])
    dual_mass = float(data["dual_mass"])
    constraints = tuple(_constraint_from_dict(c) for c in data.get("constraints", []))
    if "q" in data and int(data["q"]) != len(constraints):
        raise ConfigurationError(
            f'"q" is {data["q"]} but {len(constraints)} constraints were given'
        )

    if ftype == "linear":
        game = GameSpec(
            n=n,
            primal_mass=primal_mass,
            dual_mass=dual_mass,
            fitness=core.MatrixFitness(np.asarray(fit["matrix"], dtype=float)),
            constraints=constraints,
            name="linear",
        )
    elif ftype == "quadratic_potential":
        game = games.build_quadratic_potential(
            np.asarray(fit["H"], dtype=float),
            np.asarray(fit["c"], dtype=float),
            constraints,
            primal_mass=primal_mass,
            dual_mass=dual_mass,
        )
    else:
        raise ConfigurationError(
            f'unknown fitness type {ftype!r} (known: linear, quadratic_potential, builtin)'
        )
    if game.n != n:
        raise ConfigurationError(f'"n" is {n} but the fitness data implies {game.n}')
    return game


def _constraint_from_dict(data: dict):
    if not isinstance(data, dict) or "type" not in data:
        raise ConfigurationError('each constraint must be an object with a "type"')
    if data["type"] == "affine":
        return core.AffineConstraint(np.asarray(data["a"], dtype=float), float(data["b"]))
    if data["type"] == "quadratic":
        return core.QuadraticConstraint(
            np.asarray(data["Q"], dtype=float),
            np.asarray(data["a"], dtype=float),
            float(data["c"]),
        )
    raise ConfigurationError(f'unknown constraint type {data["type"]!r}')


# ---------------------------------------------------------------------------
# small helpers


def _parse_vector(text: str, what: str) -> np.ndarray:
    try:
        values = [float(tok) for tok in text.split(",")]
    except ValueError as exc:
        raise ConfigurationError(f"{what}: expected comma-separated numbers, got {text!r}") from exc
    if not values:
        raise ConfigurationError(f"{what}: empty vector")
    return np.array(values)


def _parse_seed_range(text: str) -> range:
    match = re.fullmatch(r"(-?\d+)\.\.(-?\d+)", text)
    if not match:
        raise ConfigurationError(f"--seeds expects a..b, got {text!r}")
    lo, hi = int(match.group(1)), int(match.group(2))
    if hi < lo:
        raise ConfigurationError(f"--seeds range is empty: {text}")
    return range(lo, hi + 1)


def _null_dual(game: GameSpec) -> DualState:
    mu = np.zeros(game.q + 1)
    mu[0] = game.dual_mass
    return DualState(mu, game.dual_mass)


def _default_primal(game: GameSpec, seed: int) -> PrimalState:
    # the rps benchmark starts at the barycenter by convention; everything
    # else draws a seeded uniform start
    if game.name == "paper-rps":
        return PrimalState(np.full(game.n, game.primal_mass / game.n), game.primal_mass)
    return dynamics.sample_simplex(game.n, game.primal_mass, seed)


def _initial_conditions(game: GameSpec, x0_flag, mu0_flag, seed: int):
    """Returns ``(x0, mu0, used_seed)``; the seed is None unless drawn from."""
    used_seed = None
    if x0_flag is not None:
        x0 = PrimalState(_parse_vector(x0_flag, "--x0"), game.primal_mass)
    else:
        x0 = _default_primal(game, seed)
        if game.name != "paper-rps":
            used_seed = seed
    if mu0_flag is not None:
        mu0 = DualState(_parse_vector(mu0_flag, "--mu0"), game.dual_mass)
    else:
        mu0 = _null_dual(game)
    return x0, mu0, used_seed


def _fmt(value: float) -> str:
    value = float(value)
    return "NaN" if math.isnan(value) else repr(value)


def _g_max(game: GameSpec, row: np.ndarray) -> float:
    # max over the real constraints; NaN when there are none
    if game.q == 0:
        return math.nan
    return float(row[1:].max())


def write_trajectory_csv(path: str, game: GameSpec, traj: Trajectory, record_every: int = 1) -> None:
    """Write the recorded trajectory as deterministic CSV.

    Rows are every ``record_every``-th recorded step plus always the final
    one.  Floats are rendered with ``repr`` (shortest round-trip form), NaN
    as the literal token ``NaN``.
    """
    if record_every < 1:
        raise ConfigurationError("--record-every must be at least 1")
    header = (
        ["t"]
        + [f"x_{i}" for i in range(1, game.n + 1)]
        + [f"mu_{k}" for k in range(game.q + 1)]
        + ["V", "p", "g_max", "xdot_norm", "mudot_norm"]
    )
    rows = list(range(0, len(traj), record_every))
    if rows[-1] != len(traj) - 1:
        rows.append(len(traj) - 1)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in rows:
            cells = (
                [_fmt(traj.times[i])]
                + [_fmt(v) for v in traj.primal[i]]
                + [_fmt(v) for v in traj.dual[i]]
                + [
                    _fmt(traj.lyapunov[i]),
                    _fmt(traj.potential[i]),
                    _fmt(_g_max(game, traj.constraints[i])),
                    _fmt(traj.primal_field_norm[i]),
                    _fmt(traj.dual_field_norm[i]),
                ]
            )
            fh.write(",".join(cells) + "\n")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _summary(game_label: str, traj: Trajectory, report, out_path: str, seed) -> dict:
    return {
        "game": game_label,
        "seed": seed,
        "steps": len(traj) - 1,
        "final_time": float(traj.times[-1]),
        "converged": traj.converged,
        "final_primal_field_norm": float(traj.primal_field_norm[-1]),
        "final_dual_field_norm": float(traj.dual_field_norm[-1]),
        "final_lyapunov": float(traj.lyapunov[-1]),
        "out": out_path,
        "report": report.as_dict(),
    }


def _seed_path(base: str, seed: int) -> str:
    stem, ext = os.path.splitext(base)
    return f"{stem}-seed{seed}{ext or '.csv'}"


# ---------------------------------------------------------------------------
# subcommands


def _sim_params(args) -> SimParams:
    return SimParams(
        horizon=args.horizon,
        step=args.step,
        integrator=args.integrator,
        convergence_tol=args.tol,
        convergence_window=args.window,
        seed=args.seed,
    )


def cmd_simulate(args) -> int:
    game = _resolve_game(args.game)
    protocol = PROTOCOLS[args.protocol]()
    dynamics.validate_protocol(protocol)
    out_base = args.out or os.path.join(_out_root(), "trajectory.csv")

    if args.seeds is not None:
        seeds = list(_parse_seed_range(args.seeds))
    else:
        seeds = [args.seed]

    def run_one(seed: int) -> dict:
        params = SimParams(
            horizon=args.horizon,
            step=args.step,
            integrator=args.integrator,
            convergence_tol=args.tol,
            convergence_window=args.window,
            seed=seed,
        )
        x0, mu0, used_seed = _initial_conditions(game, args.x0, args.mu0, seed)
        traj = dynamics.integrate(game, protocol, x0, mu0, params)
        report = equilibrium.in_equilibria_set(
            game, traj.final_primal, traj.final_dual, tol=args.report_tol
        )
        path = _seed_path(out_base, seed) if len(seeds) > 1 else out_base
        write_trajectory_csv(path, game, traj, args.record_every)
        return _summary(args.game, traj, report, path, used_seed)

    if len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=min(8, len(seeds))) as pool:
            futures = [pool.submit(run_one, seed) for seed in seeds]
            summaries = [f.result() for f in futures]
        print(_dump_json(summaries), end="")
    else:
        summaries = [run_one(seeds[0])]
        print(_dump_json(summaries[0]), end="")

    return _EXIT_OK if all(s["converged"] for s in summaries) else _EXIT_NO_CONVERGENCE


def cmd_verify(args) -> int:
    game = _resolve_game(args.game)
    with open(args.state, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{args.state}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict) or "x" not in data or "mu" not in data:
        raise ConfigurationError(f'{args.state}: expected an object with "x" and "mu"')
    x = PrimalState(np.asarray(data["x"], dtype=float), game.primal_mass)
    mu = DualState(np.asarray(data["mu"], dtype=float), game.dual_mass)
    core._check_primal(game, x)
    core._check_dual(game, mu)
    report = equilibrium.in_equilibria_set(game, x, mu, tol=args.tol)
    print(_dump_json(report.as_dict()), end="")
    return _EXIT_OK if report.in_set else _EXIT_THRESHOLDS


def cmd_bound(args) -> int:
    game = _resolve_game(args.game)
    x = PrimalState(_parse_vector(args.slater, "--slater"), game.primal_mass)
    slater = equilibrium.slater_point(game, x)
    if args.p_star_upper is not None:
        p_upper = args.p_star_upper
    else:
        solution = equilibrium.oracle_solve(
            game, resolution=ORACLE_RESOLUTION, refine_iters=ORACLE_REFINE_ITERS, seed=0
        )
        p_upper = solution.value + solution.gap
    bound = equilibrium.dual_mass_bound(game, slater, p_upper)
    out = {
        "bound": bound,
        "dual_mass": game.dual_mass,
        "sufficient": game.dual_mass >= bound,
        "margin": slater.margin,
        "p_star_upper": p_upper,
    }
    print(_dump_json(out), end="")
    return _EXIT_OK


def _repro_checks_congestion(game, traj, report, audit) -> list:
    solution = equilibrium.oracle_solve(
        game, resolution=ORACLE_RESOLUTION, refine_iters=ORACLE_REFINE_ITERS, seed=0
    )
    g_end = traj.constraints[-1][1:].max()
    deviation = float(np.max(np.abs(traj.primal[-1] - solution.point.x)))
    return [
        ("converged", traj.converged, f"converged={traj.converged} at t={traj.times[-1]:.2f}"),
        ("endpoint_feasible", g_end <= 1e-3, f"max_k g_k = {g_end:.3e} (limit 1e-3)"),
        (
            "oracle_match",
            deviation <= 1e-2,
            f"|x - x_oracle|_inf = {deviation:.3e} (limit 1e-2)",
        ),
        ("equilibrium_verdict", report.in_set, f"verdict={report.verdict} at tol {REPORT_TOL}"),
        (
            "lyapunov_monotone",
            audit.fraction_nonincreasing >= AUDIT_FRACTION,
            f"fraction nonincreasing = {audit.fraction_nonincreasing:.6f} (limit {AUDIT_FRACTION})",
        ),
        (
            "lyapunov_nonnegative",
            audit.nonnegativity_ok,
            f"nonnegativity_ok={audit.nonnegativity_ok}",
        ),
    ]


def _repro_checks_rps(game, traj, report, audit) -> list:
    x_end = traj.primal[-1]
    deviation = float(np.max(np.abs(x_end - np.array(RPS_TARGET))))
    cap_value = float(x_end[0] ** 2 + x_end[1] ** 2)
    return [
        (
            "endpoint_target",
            deviation <= 1e-2,
            f"|x - {list(RPS_TARGET)}|_inf = {deviation:.3e} (limit 1e-2)",
        ),
        (
            "cap_feasible",
            cap_value <= 0.1 + 1e-6,
            f"x_1^2 + x_2^2 = {cap_value:.8f} (limit 0.1 + 1e-6)",
        ),
        (
            "cap_active",
            cap_value >= 0.098,
            f"x_1^2 + x_2^2 = {cap_value:.8f} (must be >= 0.098)",
        ),
        (
            "lyapunov_monotone",
            audit.fraction_nonincreasing >= AUDIT_FRACTION,
            f"fraction nonincreasing = {audit.fraction_nonincreasing:.6f} (limit {AUDIT_FRACTION})",
        ),
        (
            "lyapunov_nonnegative",
            audit.nonnegativity_ok,
            f"nonnegativity_ok={audit.nonnegativity_ok}",
        ),
    ]


def cmd_repro(args) -> int:
    out_dir = args.out_dir or os.path.join(_out_root(), f"repro-{args.experiment}")
    os.makedirs(out_dir, exist_ok=True)

    protocol = PROTOCOLS["smith"]()
    if args.experiment == "congestion":
        game = games.paper_congestion()
        x0 = dynamics.sample_simplex(game.n, game.primal_mass, args.seed)
    else:
        game = games.paper_rps()
        x0 = PrimalState(np.full(game.n, game.primal_mass / game.n), game.primal_mass)
    mu0 = _null_dual(game)

    params = SimParams(horizon=args.horizon, step=args.step, seed=args.seed)
    traj = dynamics.integrate(game, protocol, x0, mu0, params)
    report = equilibrium.in_equilibria_set(game, traj.final_primal, traj.final_dual, tol=REPORT_TOL)
    audit = monotonicity_audit(game, protocol, protocol, traj, audit_tol=AUDIT_TOL)

    write_trajectory_csv(os.path.join(out_dir, "trajectory.csv"), game, traj, args.record_every)
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(_dump_json(report.as_dict()))
    audit_payload = {
        "audit_tol": AUDIT_TOL,
        "samples": len(traj),
        "max_increase": audit.max_increase,
        "violation_steps": list(audit.violation_steps),
        "fraction_nonincreasing": audit.fraction_nonincreasing,
        "nonnegativity_ok": audit.nonnegativity_ok,
    }
    with open(os.path.join(out_dir, "audit.json"), "w", encoding="utf-8") as fh:
        fh.write(_dump_json(audit_payload))

    if args.experiment == "congestion":
        checks = _repro_checks_congestion(game, traj, report, audit)
    else:
        checks = _repro_checks_rps(game, traj, report, audit)

    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    failed = [name for name, ok, _ in checks if not ok]
    if failed:
        print(f"failed criteria: {', '.join(failed)}")
        return _EXIT_THRESHOLDS
    print(f"all criteria passed; outputs in {out_dir}")
    return _EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_game_arg(sub):
    sub.add_argument(
        "--game",
        required=True,
        help="builtin name (paper-congestion, paper-rps) or path to a game JSON file",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="popdyn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate the coupled dynamics and write a trajectory")
    _add_game_arg(sim)
    sim.add_argument("--protocol", default="smith", choices=sorted(PROTOCOLS))
    sim.add_argument("--step", type=float, default=0.01, help="integration step (seconds)")
    sim.add_argument("--horizon", type=float, default=200.0, help="time horizon (seconds)")
    sim.add_argument("--integrator", default="euler", choices=("euler", "rk4"))
    sim.add_argument("--tol", type=float, default=1e-6, help="convergence tolerance on field norms")
    sim.add_argument("--window", type=int, default=100, help="consecutive quiet steps to converge")
    sim.add_argument("--seed", type=int, default=0, help="seed for the default random start")
    sim.add_argument("--seeds", default=None, help="a..b inclusive; one run and file per seed")
    sim.add_argument("--x0", default=None, help="explicit start, comma-separated")
    sim.add_argument("--mu0", default=None, help="explicit dual start, comma-separated")
    sim.add_argument("--out", default=None, help="trajectory CSV path")
    sim.add_argument("--record-every", type=int, default=1, help="keep every Nth step in the CSV")
    sim.add_argument("--report-tol", type=float, default=REPORT_TOL)
    sim.set_defaults(handler=cmd_simulate)

    ver = sub.add_parser("verify", help="equilibrium membership report for a stored state")
    _add_game_arg(ver)
    ver.add_argument("--state", required=True, help='JSON file with "x" and "mu"')
    ver.add_argument("--tol", type=float, default=REPORT_TOL)
    ver.set_defaults(handler=cmd_verify)

    bnd = sub.add_parser("bound", help="sufficient dual mass from an interior point")
    _add_game_arg(bnd)
    bnd.add_argument("--slater", required=True, help="strictly feasible interior point, comma-separated")
    bnd.add_argument(
        "--p-star-upper",
        type=float,
        default=None,
        help="certified upper bound on the optimum (default: oracle value + gap)",
    )
    bnd.set_defaults(handler=cmd_bound)

    rep = sub.add_parser("repro", help="run a benchmark experiment and check its thresholds")
    rep.add_argument("experiment", choices=("congestion", "rps"))
    rep.add_argument("--seed", type=int, default=0, help="seed for the congestion random start")
    rep.add_argument("--step", type=float, default=0.01)
    rep.add_argument("--horizon", type=float, default=200.0)
    rep.add_argument("--record-every", type=int, default=1)
    rep.add_argument("--out-dir", default=None, help="output directory (default under POPDYN_OUT_DIR)")
    rep.set_defaults(handler=cmd_repro)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_USAGE
    except (
        ConfigurationError,
        UnsupportedOperationError,
        SlaterViolationError,
        InfeasibleInstanceError,
        IntegrationDivergedError,
        QuadratureError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
