"""Time integration of the macro model.

Advances the 25 free variables with adaptive stepping (nonstiff/stiff
switching), applies piecewise-linear parameter schedules, guards the
positive-domain quantities, and samples states, dependents, multipliers
and utility diagnostics along the way.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import LSODA, RK45

from . import macro
from .core import InfeasibleStateError, ex_post_derivative, verify_affinity
from .macro import (
    AUX_NAMES,
    EXT_NAMES,
    LAMBDA_NAMES,
    MacroParams,
    MacroState,
    N_STATE,
    STATE_NAMES,
    build_model,
    utilities,
    validate_state,
    zero_directions,
)

__all__ = [
    "Schedule",
    "RunConfig",
    "StopReason",
    "Trajectory",
    "integrate",
    "apply_schedule",
    "detect_convergence",
    "projected_relative_deviation",
    "TRAJECTORY_COLUMNS",
]

# quantities the positivity guard watches at accepted samples
_GUARD_INDICES = tuple(STATE_NAMES.index(n) for n in (
    "K_f1", "K_f2", "A_12", "A_21",
    "C_a1", "C_a2", "C_b1", "C_b2",
    "G_g1", "G_g2",
    "L_a1", "L_a2", "L_b1", "L_b2",
    "p_1", "p_2", "w_1", "w_2",
))

_DIVERGENCE_LIMIT = 1e9


@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear parameter paths; parameters not listed stay constant.

    Each path is a list of (time, value) breakpoints with strictly
    increasing times; evaluation interpolates linearly and extrapolates
    with the end values.
    """

    paths: dict[str, tuple[tuple[float, float], ...]] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for name, pts in self.paths.items():
            if not hasattr(MacroParams, "__dataclass_fields__") or name not in MacroParams.__dataclass_fields__:
                raise ValueError(f"schedule refers to unknown parameter {name!r}")
            if name == "conspicuous":
                raise ValueError("the conspicuous flag cannot be scheduled")
            pts = tuple((float(t), float(v)) for t, v in pts)
            if not pts:
                raise ValueError(f"schedule for {name!r} has no breakpoints")
            times = [t for t, _ in pts]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError(f"schedule for {name!r}: breakpoint times must increase")
            clean[name] = pts
        object.__setattr__(self, "paths", clean)

    @property
    def breakpoint_times(self) -> tuple[float, ...]:
        ts = sorted({t for pts in self.paths.values() for t, _ in pts})
        return tuple(ts)

    def is_empty(self) -> bool:
        return not self.paths


def apply_schedule(params: MacroParams, schedule: Schedule | None, t: float) -> MacroParams:
    """Parameter record at time t (pure; constant outside the breakpoints)."""
    if schedule is None or schedule.is_empty():
        return params
    changes = {}
    for name, pts in schedule.paths.items():
        times = [q for q, _ in pts]
        vals = [v for _, v in pts]
        changes[name] = float(np.interp(t, times, vals))
    return params.replace(**changes)


@dataclass(frozen=True)
class RunConfig:
    """Integration settings."""

    t_start: float = 0.0
    t_end: float = 100.0
    rtol: float = 1e-8
    atol: float = 1e-10
    sample_interval: float = 0.25
    positivity_floor: float = 1e-9
    convergence_tol: float = 0.01
    method: str = "auto"  # "auto" (stiffness-switching) or "rk45"
    reference: MacroState | None = None  # early stop once within tolerance
    convergence_metric: str = "projected"  # or "invariant"
    check_affinity: bool = True

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.rtol <= 0 or self.atol <= 0 or self.sample_interval <= 0:
            raise ValueError("tolerances and sample interval must be positive")


@dataclass(frozen=True)
class StopReason:
    """Why a run ended: completed | converged | positivity_abort | solver_abort."""

    kind: str
    time: float | None = None
    variable: str | None = None
    detail: str | None = None

    def __str__(self) -> str:
        bits = [self.kind]
        if self.time is not None:
            bits.append(f"t={self.time:g}")
        if self.variable:
            bits.append(self.variable)
        if self.detail:
            bits.append(self.detail)
        return " ".join(bits)


# column layout of the trajectory table / CSV export
_DEP_NAMES = ("L_f1", "L_f2", "T_a", "T_b", "r_f1", "r_f2", "r_M",
              "E_f1", "E_f2", "E_bank", "V_a", "V_b", "D_g", "V_g",
              "pi_f1", "pi_f2", "pi_bank", "P_f1", "P_f2")
_UTIL_NAMES = ("U_a", "U_b", "U_g", "U_f1", "U_f2",
               "a_leisure_w1", "a_leisure_w2", "a_cons_1", "a_cons_2",
               "b_leisure_w1", "b_leisure_w2", "b_cons_1", "b_cons_2",
               "f1_capital", "f1_labor", "f1_intermediate",
               "f2_capital", "f2_labor", "f2_intermediate")
TRAJECTORY_COLUMNS = ("time",) + STATE_NAMES + _DEP_NAMES + LAMBDA_NAMES + _UTIL_NAMES


@dataclass
class Trajectory:
    """Sampled run: states, dependents, multipliers, utilities, stop reason."""

    times: np.ndarray
    states: np.ndarray       # (n, 25)
    dependents: np.ndarray   # (n, len(_DEP_NAMES))
    multipliers: np.ndarray  # (n, 7)
    utility: np.ndarray      # (n, len(_UTIL_NAMES))
    stop_reason: StopReason

    def state_at(self, i: int) -> MacroState:
        return MacroState.from_vector(self.states[i])

    @property
    def final_state(self) -> MacroState:
        return self.state_at(len(self.times) - 1)

    def table(self) -> np.ndarray:
        return np.column_stack([self.times, self.states, self.dependents,
                                self.multipliers, self.utility])

    def to_csv(self, path) -> None:
        """Comma-separated export, full double precision, fixed column order."""
        table = self.table()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(TRAJECTORY_COLUMNS) + "\n")
            for row in table:
                fh.write(",".join("%.17g" % v for v in row) + "\n")


def projected_relative_deviation(
    state_vec: np.ndarray, reference_vec: np.ndarray
) -> float:
    """Max relative deviation over the free variables after projecting out
    the two neutral split directions."""
    d = np.asarray(state_vec, dtype=float) - reference_vec
    for v in zero_directions():
        d -= v * (v @ d) / (v @ v)
    return float(np.max(np.abs(d) / np.abs(reference_vec)))


# stationary states form a manifold: besides the labor and financing
# splits, the deposit composition and the overall nominal level are
# neutral/path dependent.  These coordinates are invariant across the
# manifold and single out the unique real equilibrium.
_INV_SIMPLE = tuple(STATE_NAMES.index(n) for n in (
    "K_f1", "K_f2", "C_a1", "C_a2", "C_b1", "C_b2",
    "G_g1", "G_g2", "A_12", "A_21", "S_f1", "S_f2", "r_g",
))


def invariant_coordinates(state_vec: np.ndarray) -> np.ndarray:
    """Path-independent coordinates of a state: real allocation, sectoral
    labor totals, the policy rate, real wages and the terms of trade."""
    s = np.asarray(state_vec, dtype=float)
    extra = (
        s[macro.L_A1] + s[macro.L_B1],   # L_f1
        s[macro.L_A2] + s[macro.L_B2],   # L_f2
        s[macro.W_1] / s[macro.P_1],
        s[macro.W_2] / s[macro.P_1],
        s[macro.P_2] / s[macro.P_1],
    )
    return np.concatenate([s[list(_INV_SIMPLE)], extra])


def invariant_relative_deviation(state_vec: np.ndarray, reference_vec: np.ndarray) -> float:
    """Max relative deviation over the invariant coordinates."""
    a = invariant_coordinates(state_vec)
    b = invariant_coordinates(reference_vec)
    return float(np.max(np.abs(a - b) / np.abs(b)))


def detect_convergence(
    traj: Trajectory, reference: MacroState, tol: float = 0.01,
    metric: str = "projected",
) -> float | None:
    """Earliest sample time from which the relative deviation to the
    reference stays below tol for the rest of the horizon.

    ``metric="projected"`` compares all free variables with the two split
    directions projected out; ``metric="invariant"`` compares only the
    path-independent coordinates (appropriate when trajectory and
    reference may settle on different points of the neutral manifold).
    """
    ref = reference.to_vector()
    if np.any(ref == 0.0):
        raise ValueError("reference state has zero components")
    dev_fn = (invariant_relative_deviation if metric == "invariant"
              else projected_relative_deviation)
    devs = np.array([dev_fn(s, ref) for s in traj.states])
    below = devs < tol
    if not below[-1]:
        return None
    # last index where deviation is >= tol; converged right after it
    above = np.nonzero(~below)[0]
    idx = 0 if len(above) == 0 else above[-1] + 1
    return float(traj.times[idx])


def _min_guarded(y: np.ndarray) -> tuple[str, float]:
    worst_name, worst = "", math.inf
    for i in _GUARD_INDICES:
        if y[i] < worst:
            worst, worst_name = y[i], STATE_NAMES[i]
    for name, (i, j) in (("leisure_a", (macro.L_A1, macro.L_A2)),
                         ("leisure_b", (macro.L_B1, macro.L_B2))):
        v = 1.0 - y[i] - y[j]
        if v < worst:
            worst, worst_name = v, name
    return worst_name, worst


def _make_solver(method: str, rhs, t: float, y: np.ndarray, t_bound: float,
                 config: RunConfig, max_step: float = np.inf):
    cls = RK45 if method == "rk45" else LSODA
    return cls(rhs, t, y, t_bound, rtol=config.rtol, atol=config.atol,
               max_step=max_step)


def integrate(
    params: MacroParams,
    schedule: Schedule | None,
    x0: MacroState,
    config: RunConfig = RunConfig(),
) -> Trajectory:
    """Advance the model from ``x0``; samples are taken every
    ``config.sample_interval`` plus at schedule breakpoints and the end.

    Stops early with reason ``converged`` when ``config.reference`` is set
    and the projected relative deviation falls below the convergence
    tolerance; aborts with ``positivity_abort`` when a guarded quantity
    falls below the floor and with ``solver_abort`` on divergence or step
    failure.
    """
    bad = validate_state(x0, params)
    if bad:
        raise ValueError("infeasible initial state: " + "; ".join(bad))
    model = build_model(params)
    if config.check_affinity and not verify_affinity(
        model, x0.to_vector(), config.t_start, apply_schedule(params, schedule, config.t_start)
    ):
        raise ValueError("constraint residuals are not affine in the multipliers")

    scheduled = schedule is not None and not schedule.is_empty()

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        p_t = apply_schedule(params, schedule, t) if scheduled else params
        rates, _ = ex_post_derivative(model, y, t, p_t)
        return np.asarray(rates[:N_STATE])

    # sample grid: uniform samples plus breakpoints inside the horizon
    t0, t1 = config.t_start, config.t_end
    n_samples = int(math.floor((t1 - t0) / config.sample_interval + 1e-9))
    sample_times = [t0 + k * config.sample_interval for k in range(n_samples + 1)]
    if sample_times[-1] < t1 - 1e-12:
        sample_times.append(t1)
    if scheduled:
        for tb in schedule.breakpoint_times:
            if t0 < tb < t1:
                sample_times.append(tb)
    sample_times = sorted(set(round(t, 12) for t in sample_times))

    ref_vec = config.reference.to_vector() if config.reference is not None else None
    dev_fn = (invariant_relative_deviation if config.convergence_metric == "invariant"
              else projected_relative_deviation)

    times: list[float] = []
    rows_state: list[np.ndarray] = []
    rows_dep: list[np.ndarray] = []
    rows_lam: list[np.ndarray] = []
    rows_util: list[np.ndarray] = []
    stop = StopReason("completed", time=t1)

    def record(t: float, y: np.ndarray) -> None:
        p_t = apply_schedule(params, schedule, t) if scheduled else params
        rates, sol = ex_post_derivative(model, y, t, p_t)
        dep = macro.dependents(y, p_t)
        util = utilities(y, p_t)
        times.append(t)
        rows_state.append(y.copy())
        rows_dep.append(np.array([getattr(dep, n) for n in _DEP_NAMES]))
        rows_lam.append(np.asarray(sol.lambdas))
        rows_util.append(np.array([getattr(util, n) for n in _UTIL_NAMES]))

    y = x0.to_vector()
    t = t0
    record(t, y)

    def finish(reason: StopReason) -> Trajectory:
        return Trajectory(
            times=np.asarray(times),
            states=np.vstack(rows_state),
            dependents=np.vstack(rows_dep),
            multipliers=np.vstack(rows_lam),
            utility=np.vstack(rows_util),
            stop_reason=reason,
        )

    method = "rk45" if config.method == "rk45" else "auto"
    # integrate segmentwise between schedule breakpoints so parameter
    # kinks are never stepped over; samples come from dense output
    segment_ends = sorted({t1, *(tb for tb in (schedule.breakpoint_times if scheduled else ())
                                 if t0 < tb < t1)})
    pending = [ts for ts in sample_times if ts > t0 + 1e-12]

    for seg_end in segment_ends:
        retries = 0
        max_step = np.inf
        solver = None
        while t < seg_end - 1e-12:
            if solver is None:
                try:
                    solver = _make_solver(method, rhs, t, y, seg_end, config, max_step)
                except InfeasibleStateError as exc:
                    return finish(_classify_abort(t, y, config, str(exc)))
            try:
                msg = solver.step()
            except InfeasibleStateError as exc:
                # trial evaluation left the feasible region: retry on a
                # shorter leash before declaring the boundary reached
                retries += 1
                if retries > 6:
                    return finish(_classify_abort(t, y, config, str(exc)))
                max_step = max((seg_end - t), 1e-8) / 4 ** retries
                solver = None
                continue
            if solver.status == "failed":
                return finish(StopReason("solver_abort", time=t, detail=msg or "step failure"))
            if not np.all(np.isfinite(solver.y)) or np.max(np.abs(solver.y)) > _DIVERGENCE_LIMIT:
                return finish(StopReason("solver_abort", time=solver.t, detail="divergence"))
            dense = solver.dense_output()
            while pending and pending[0] <= solver.t + 1e-12:
                ts = pending.pop(0)
                ys = y if abs(ts - t) < 1e-12 else dense(min(ts, solver.t))
                record(ts, np.asarray(ys))
                if ref_vec is not None and dev_fn(
                    rows_state[-1], ref_vec
                ) < config.convergence_tol:
                    return finish(StopReason("converged", time=ts))
            t, y = solver.t, solver.y
            name, worst = _min_guarded(y)
            if worst <= config.positivity_floor:
                return finish(StopReason("positivity_abort", time=t, variable=name))
    return finish(stop)


def _classify_abort(t: float, y: np.ndarray, config: RunConfig, detail: str) -> StopReason:
    name, worst = _min_guarded(y)
    if worst <= max(config.positivity_floor, 1e-5):
        return StopReason("positivity_abort", time=t, variable=name, detail=detail)
    return StopReason("solver_abort", time=t, detail=detail)
