"""Command-line front end: simulate, verify, compare, sweep.

Configs are plain JSON; every command writes machine-readable outputs (CSV
for trajectories and tables, JSON for summaries and certification reports)
into the chosen output directory.  Exit codes: 0 success, 1 usage or config
error, 2 certification failure, 3 runtime failure (every run stopped on a
barrier).
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .controllers import ControllerKind, ControllerSpec, Gains
from .geometry import CartesianState, DomainError, PolarState, StateSpace, metric
from .lyapunov import ArgumentOrder, Compositor, CompositeLyapunovFn, LyapunovFn
from .sim import Frame, IntegratorKind, SimConfig, SimStatus, Trajectory, simulate
from .verify import run_suite

__all__ = ["main"]


class UsageError(Exception):
    """Bad invocation or bad config; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep argparse from exiting with its own code
        raise UsageError(message)


# ---------------------------------------------------------------------------
# config parsing (hand-validated JSON; no schema dependency)

_GAIN_KEYS = ("k1", "k2", "k3", "k4")


def _fail(msg: str) -> None:
    raise UsageError(f"invalid config: {msg}")


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        _fail("top level must be a JSON object")
    return cfg


def _parse_gains(obj) -> Gains:
    if isinstance(obj, (list, tuple)):
        if len(obj) != 4:
            _fail("gains list must have exactly 4 entries")
        vals = obj
    elif isinstance(obj, dict):
        unknown = set(obj) - set(_GAIN_KEYS)
        if unknown:
            _fail(f"unknown gain keys: {sorted(unknown)}")
        vals = [obj.get(k, 1.0) for k in _GAIN_KEYS]
    else:
        _fail("gains must be a 4-list or an object with k1..k4")
    try:
        return Gains(*(float(v) for v in vals))
    except (TypeError, ValueError) as exc:
        _fail(f"bad gains: {exc}")


def _parse_kind(obj) -> ControllerKind:
    try:
        return ControllerKind(str(obj).lower())
    except ValueError:
        names = ", ".join(k.value for k in ControllerKind)
        _fail(f"unknown controller '{obj}'; choose one of {names}")


def _parse_spec(cfg: dict, kind_obj) -> ControllerSpec:
    kind = _parse_kind(kind_obj)
    gains = _parse_gains(cfg.get("gains", [1.0, 1.0, 1.0, 1.0]))
    allow = bool(cfg.get("allow_unproven_gains", False))
    try:
        return ControllerSpec(kind, gains, allow_unproven_gains=allow)
    except ValueError as exc:
        _fail(str(exc))


def _parse_ic(obj, index: int) -> PolarState | CartesianState:
    if not isinstance(obj, dict):
        _fail(f"initial condition #{index} must be an object")
    keys = set(obj)
    try:
        if keys == {"rho", "delta", "gamma"}:
            return PolarState(float(obj["rho"]), float(obj["delta"]), float(obj["gamma"]))
        if keys == {"x", "y", "theta"}:
            return CartesianState(float(obj["x"]), float(obj["y"]), float(obj["theta"]))
    except (TypeError, ValueError) as exc:
        _fail(f"initial condition #{index}: {exc}")
    _fail(
        f"initial condition #{index} must have keys rho/delta/gamma or x/y/theta, got {sorted(keys)}"
    )


def _parse_ics(cfg: dict) -> list:
    ics = cfg.get("initial_conditions")
    if not isinstance(ics, list) or not ics:
        _fail("initial_conditions must be a non-empty list")
    return [_parse_ic(obj, i) for i, obj in enumerate(ics)]


def _parse_sim(cfg: dict, frame_flag: str | None) -> SimConfig:
    sim = cfg.get("sim", {})
    if not isinstance(sim, dict):
        _fail("sim must be an object")
    known = {
        "dt", "t_final", "capture_radius", "frame", "integrator", "rtol", "atol", "h_min",
    }
    unknown = set(sim) - known
    if unknown:
        _fail(f"unknown sim keys: {sorted(unknown)}")
    frame_name = frame_flag or sim.get("frame", "polar")
    try:
        frame = Frame(str(frame_name).lower())
    except ValueError:
        _fail(f"unknown frame '{frame_name}'; choose polar or cartesian")
    integ_name = sim.get("integrator", "rk45")
    try:
        integrator = IntegratorKind(str(integ_name).lower())
    except ValueError:
        _fail(f"unknown integrator '{integ_name}'; choose rk45 or rk4")
    try:
        return SimConfig(
            dt=float(sim.get("dt", 0.05)),
            t_final=float(sim.get("t_final", 60.0)),
            capture_radius=float(sim.get("capture_radius", 1e-3)),
            frame=frame,
            integrator=integrator,
            rtol=float(sim.get("rtol", 1e-10)),
            atol=float(sim.get("atol", 1e-10)),
            h_min=float(sim.get("h_min", 1e-9)),
        )
    except (TypeError, ValueError) as exc:
        _fail(f"bad sim settings: {exc}")


_FORMS = {
    "sum": Compositor.sum_form,
    "log_sum": Compositor.log_sum,
    "exp_product": Compositor.exp_product,
}


def _parse_compositor(cfg: dict) -> Compositor:
    name = str(cfg.get("compositor", "sum")).lower()
    order_name = str(cfg.get("compositor_order", "rho_first")).lower()
    if name not in _FORMS:
        _fail(f"unknown compositor '{name}'; choose one of {', '.join(_FORMS)}")
    try:
        order = ArgumentOrder(order_name)
    except ValueError:
        _fail("compositor_order must be rho_first or vdg_first")
    return _FORMS[name](order)


# ---------------------------------------------------------------------------
# shared helpers

def _out_dir(args) -> Path:
    out = Path(args.out if args.out is not None else "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _json_safe(x):
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    return x


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def _path_length(traj: Trajectory) -> float:
    if len(traj) < 2:
        return 0.0
    return float(_trapezoid(np.abs(traj.v), traj.t))


def _barrier_distance(space: StateSpace, traj: Trajectory) -> float | None:
    """Smallest recorded distance to an excluded angular set; None if none."""
    dists = []
    if space.delta_bounded:
        dists.append(math.pi - float(np.abs(traj.delta).max()))
    if space.gamma_bounded:
        dists.append(math.pi - float(np.abs(traj.gamma).max()))
    return min(dists) if dists else None


def _final_state(traj: Trajectory) -> dict:
    return {
        "rho": float(traj.rho[-1]),
        "delta": float(traj.delta[-1]),
        "gamma": float(traj.gamma[-1]),
        "x": float(traj.x[-1]),
        "y": float(traj.y[-1]),
        "theta": float(traj.theta[-1]),
    }


def _run_many(tasks, worker):
    """Run tasks concurrently, preserving order; results collected centrally."""
    if len(tasks) == 1:
        return [worker(tasks[0])]
    with ThreadPoolExecutor(max_workers=min(8, len(tasks))) as pool:
        return list(pool.map(worker, tasks))


def _v_monotone(traj: Trajectory, tol: float = 1e-8) -> tuple[bool, float]:
    vals = np.asarray(traj.lyapunov, dtype=float)
    if np.isnan(vals).any() or len(vals) < 2:
        return True, 0.0
    max_rise = float(np.diff(vals).max())
    return max_rise <= tol, max_rise


# ---------------------------------------------------------------------------
# simulate

def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    spec = _parse_spec(cfg, cfg.get("controller"))
    ics = _parse_ics(cfg)
    sim_cfg = _parse_sim(cfg, args.frame)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    lyap = CompositeLyapunovFn(_parse_compositor(cfg), LyapunovFn(spec.kind, spec.gains))
    out = _out_dir(args)

    def worker(item):
        i, ic = item
        try:
            return i, simulate(spec, ic, sim_cfg, lyapunov=lyap), None
        except DomainError as exc:
            return i, None, str(exc)

    results = _run_many(list(enumerate(ics)), worker)

    entries = []
    statuses = []
    for i, traj, err in results:
        if err is not None:
            entries.append({"ic_index": i, "error": err})
            continue
        csv_path = out / f"ic_{i:03d}.csv"
        traj.to_csv(csv_path)
        monotone, max_rise = _v_monotone(traj)
        statuses.append(traj.status)
        entries.append(
            {
                "ic_index": i,
                "file": csv_path.name,
                "status": traj.status.value,
                "capture_time": _json_safe(traj.capture_time),
                "path_length": _path_length(traj),
                "final_state": _final_state(traj),
                "V_monotone": monotone,
                "max_V_increase": max_rise,
                "note": traj.note,
            }
        )

    summary = {
        "command": "simulate",
        "controller": spec.kind.value,
        "gains": [spec.gains.k1, spec.gains.k2, spec.gains.k3, spec.gains.k4],
        "frame": sim_cfg.frame.value,
        "integrator": sim_cfg.integrator.value,
        "seed": seed,
        "results": entries,
    }
    _write_json(out / "summary.json", summary)
    print(f"simulate: {len(statuses)}/{len(ics)} runs completed, outputs in {out}")

    if not statuses:
        print("error: no initial condition could be run", file=sys.stderr)
        return 1
    if all(s is SimStatus.BOUNDARY_STOP for s in statuses):
        print("error: every run stopped on a barrier", file=sys.stderr)
        return 3
    return 0


# ---------------------------------------------------------------------------
# verify

def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9_.-]+", "_", name.lower()).strip("_")


def _cmd_verify(args) -> int:
    try:
        reports = run_suite(args.suite, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = _out_dir(args)

    width = max(len(r.check_name) for r in reports)
    lines = []
    for rep in reports:
        _write_json(out / f"verify_{_slug(rep.check_name)}.json", rep.to_dict())
        verdict = "pass" if rep.passed else "FAIL"
        lines.append(f"{rep.check_name:<{width}}  {verdict}  worst margin {rep.worst_margin: .3e}")
    _write_json(
        out / "verify_summary.json",
        {
            "command": "verify",
            "suite": args.suite,
            "seed": args.seed,
            "n_checks": len(reports),
            "n_failed": sum(not r.passed for r in reports),
            "reports": [r.to_dict() for r in reports],
        },
    )
    print("\n".join(lines))
    n_fail = sum(not r.passed for r in reports)
    print(f"verify: {len(reports) - n_fail}/{len(reports)} checks passed, reports in {out}")
    return 2 if n_fail else 0


# ---------------------------------------------------------------------------
# compare

_SIMILARITY_TOL = 0.05


def _compare_rows(traj_a: Trajectory, traj_b: Trajectory) -> float:
    """Largest pointwise state discrepancy over the common time prefix."""
    n = min(len(traj_a), len(traj_b))
    if n == 0:
        return math.inf
    d = (
        np.abs(traj_a.rho[:n] - traj_b.rho[:n])
        + np.abs(traj_a.delta[:n] - traj_b.delta[:n])
        + np.abs(traj_a.gamma[:n] - traj_b.gamma[:n])
    )
    return float(d.max())


def _cmd_compare(args) -> int:
    cfg = _load_config(args.config)
    kinds_obj = cfg.get("controllers")
    if not isinstance(kinds_obj, list) or len(kinds_obj) < 2:
        _fail("compare needs a controllers list with at least 2 entries")
    specs = [_parse_spec(cfg, obj) for obj in kinds_obj]
    ics = _parse_ics(cfg)
    sim_cfg = _parse_sim(cfg, args.frame)
    sim_tol = float(cfg.get("similarity_tol", _SIMILARITY_TOL))
    out = _out_dir(args)

    tasks = [(i, ic, spec) for i, ic in enumerate(ics) for spec in specs]

    def worker(item):
        i, ic, spec = item
        lyap = CompositeLyapunovFn(Compositor.sum_form(), LyapunovFn(spec.kind, spec.gains))
        try:
            return i, spec, simulate(spec, ic, sim_cfg, lyapunov=lyap), None
        except DomainError as exc:
            return i, spec, None, str(exc)

    results = _run_many(tasks, worker)

    rows = []
    trajs: dict[tuple[int, str], Trajectory] = {}
    statuses = []
    for i, spec, traj, err in results:
        if err is not None:
            rows.append(
                {
                    "ic_index": i,
                    "controller": spec.kind.value,
                    "flag": "outside-space",
                    "error": err,
                }
            )
            continue
        trajs[(i, spec.kind.value)] = traj
        statuses.append(traj.status)
        rows.append(
            {
                "ic_index": i,
                "controller": spec.kind.value,
                "status": traj.status.value,
                "capture_time": _json_safe(traj.capture_time),
                "path_length": _path_length(traj),
                "max_abs_omega": float(np.abs(traj.omega).max()),
                "min_barrier_distance": _barrier_distance(spec.space, traj),
                "flag": "",
            }
        )

    pairs = []
    for i in range(len(ics)):
        for a in range(len(specs)):
            for b in range(a + 1, len(specs)):
                ka, kb = specs[a].kind.value, specs[b].kind.value
                ta, tb = trajs.get((i, ka)), trajs.get((i, kb))
                if ta is None or tb is None:
                    continue
                sim_val = _compare_rows(ta, tb)
                pairs.append(
                    {
                        "ic_index": i,
                        "pair": [ka, kb],
                        "max_state_discrepancy": _json_safe(sim_val),
                        "essentially_identical": sim_val < sim_tol,
                    }
                )

    cols = (
        "ic_index", "controller", "status", "capture_time", "path_length",
        "max_abs_omega", "min_barrier_distance", "flag",
    )
    with open(out / "compare.csv", "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            cells = []
            for c in cols:
                val = row.get(c)
                if val is None:
                    cells.append("")
                elif isinstance(val, float):
                    cells.append(repr(val))
                else:
                    cells.append(str(val))
            fh.write(",".join(cells) + "\n")
    _write_json(
        out / "compare_summary.json",
        {
            "command": "compare",
            "controllers": [s.kind.value for s in specs],
            "similarity_tol": sim_tol,
            "rows": rows,
            "pairs": pairs,
        },
    )
    flagged = sum(1 for r in rows if r.get("flag"))
    print(
        f"compare: {len(rows)} rows ({flagged} flagged), "
        f"{sum(p['essentially_identical'] for p in pairs)}/{len(pairs)} pairs essentially identical, "
        f"outputs in {out}"
    )

    if not statuses:
        print("error: no run completed", file=sys.stderr)
        return 1
    if all(s is SimStatus.BOUNDARY_STOP for s in statuses):
        print("error: every run stopped on a barrier", file=sys.stderr)
        return 3
    return 0


# ---------------------------------------------------------------------------
# sweep

def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    kind = _parse_kind(cfg.get("controller"))
    allow = bool(cfg.get("allow_unproven_gains", False))
    grid_obj = cfg.get("gain_sets")
    if not isinstance(grid_obj, list) or not grid_obj:
        _fail("sweep needs a non-empty gain_sets list")
    specs = []
    for j, gobj in enumerate(grid_obj):
        try:
            specs.append(ControllerSpec(kind, _parse_gains(gobj), allow_unproven_gains=allow))
        except ValueError as exc:
            _fail(f"gain set #{j}: {exc}")
    ics = _parse_ics(cfg)
    sim_cfg = _parse_sim(cfg, args.frame)
    out = _out_dir(args)

    tasks = [(j, spec, i, ic) for j, spec in enumerate(specs) for i, ic in enumerate(ics)]

    def worker(item):
        j, spec, i, ic = item
        try:
            return j, i, simulate(spec, ic, sim_cfg), None
        except DomainError as exc:
            return j, i, None, str(exc)

    results = _run_many(tasks, worker)

    statuses = []
    with open(out / "sweep.csv", "w", encoding="utf-8") as fh:
        fh.write(
            "gain_set,ic_index,k1,k2,k3,k4,status,capture_time,path_length,final_metric,error\n"
        )
        for (j, i, traj, err), (jj, spec, ii, _ic) in zip(results, tasks):
            g = spec.gains
            if err is not None:
                fh.write(f"{j},{i},{g.k1!r},{g.k2!r},{g.k3!r},{g.k4!r},,,,,{err}\n")
                continue
            statuses.append(traj.status)
            final = traj.final_state()
            fm = metric(spec.space, PolarState(max(final.rho, 0.0), final.delta, final.gamma))
            cap = "" if traj.capture_time is None else repr(traj.capture_time)
            fh.write(
                f"{j},{i},{g.k1!r},{g.k2!r},{g.k3!r},{g.k4!r},{traj.status.value},"
                f"{cap},{_path_length(traj)!r},{fm!r},\n"
            )
    _write_json(
        out / "sweep_summary.json",
        {
            "command": "sweep",
            "controller": kind.value,
            "n_gain_sets": len(specs),
            "n_ics": len(ics),
            "n_runs": len(results),
            "n_completed": len(statuses),
        },
    )
    print(f"sweep: {len(statuses)}/{len(results)} runs completed, outputs in {out}")

    if not statuses:
        print("error: no run completed", file=sys.stderr)
        return 1
    if all(s is SimStatus.BOUNDARY_STOP for s in statuses):
        print("error: every run stopped on a barrier", file=sys.stderr)
        return 3
    return 0


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> _Parser:
    parser = _Parser(
        prog="polarpark",
        description="Simulate and certify polar-coordinate parking controllers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=None, help="output directory (default: out)")
        p.add_argument("--seed", type=int, default=None, help="RNG seed override")
        p.add_argument(
            "--frame", choices=[f.value for f in Frame], default=None,
            help="integration frame override",
        )

    common(sub.add_parser("simulate", help="integrate one controller from listed starts"))
    p_ver = sub.add_parser("verify", help="run the certification battery")
    p_ver.add_argument("--suite", default="all", help="all, lemma1, clf, prop1, kl, or gradient")
    p_ver.add_argument("--out", default=None, help="output directory (default: out)")
    p_ver.add_argument("--seed", type=int, default=0, help="battery base seed")
    common(sub.add_parser("compare", help="run several controllers from shared starts"))
    common(sub.add_parser("sweep", help="cross gain sets with starts, summarize each run"))
    return parser


_COMMANDS = {
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "compare": _cmd_compare,
    "sweep": _cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
