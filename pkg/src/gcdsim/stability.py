"""Local and global stability analysis.

Constrained Jacobian of the reduced 25-variable dynamics at a fixed
point, its eigenstructure (including the neutral split directions), the
price-speed x quantity-speed classification sweep, parameter
sensitivities, and a randomized study of global convergence.
"""

from __future__ import annotations

import dataclasses
import multiprocessing
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import subspace_angles

from . import macro
from .core import ex_post_derivative
from .integrate import (
    RunConfig,
    Trajectory,
    detect_convergence,
    integrate,
    invariant_relative_deviation,
)
from .macro import (
    MacroParams,
    MacroState,
    N_STATE,
    STATE_NAMES,
    baseline_state,
    build_model,
    scale_powers,
    validate_state,
    zero_directions,
)
from .numdiff import central_jacobian
from .stationary import StationaryError, solve_stationary

__all__ = [
    "ReducedJacobian",
    "EigenReport",
    "CellClassification",
    "GlobalRunResult",
    "GlobalStudyReport",
    "reduced_jacobian",
    "eigenanalysis",
    "classify_point",
    "sweep",
    "parameter_sensitivity",
    "randomized_global_study",
    "baseline_fixed_point",
]

NEAR_ZERO_FACTOR = 1e-6  # |eigenvalue| below this times the spectral radius counts as zero

# production decisions (input factors and total production) agree across
# converged runs; nominal levels, financing, deposit composition and the
# distribution side stay path dependent
PRODUCTION_VARIABLES = (
    "K_f1", "K_f2", "L_f1", "L_f2", "A_12", "A_21",
    "S_f1", "S_f2", "P_f1", "P_f2", "r_g",
)


def production_profile(state: MacroState, params: MacroParams) -> dict[str, float]:
    """Input factors and production levels at a state."""
    dep = macro.dependents(state, params)
    vals = {
        "K_f1": state.K_f1, "K_f2": state.K_f2,
        "L_f1": dep.L_f1, "L_f2": dep.L_f2,
        "A_12": state.A_12, "A_21": state.A_21,
        "S_f1": state.S_f1, "S_f2": state.S_f2,
        "P_f1": dep.P_f1, "P_f2": dep.P_f2,
        "r_g": state.r_g,
    }
    return vals


@dataclass(frozen=True)
class ReducedJacobian:
    """d(realized rate)/d(state) on the 25 free variables at a fixed point.

    Every column perturbs one free variable and re-derives all dependent
    quantities before evaluating the rates.
    """

    matrix: np.ndarray
    steps: np.ndarray
    state: MacroState

    def richardson_check(self, params: MacroParams, rel_tol: float = 1e-4,
                         floor: float = 1e-8) -> float:
        """Max relative disagreement with a half-step Jacobian on entries
        above the floor."""
        half = reduced_jacobian(params, self.state, rel_step=0.5e-6)
        a, b = self.matrix, half.matrix
        mask = np.abs(a) > floor
        return float(np.max(np.abs(a[mask] - b[mask]) / np.abs(a[mask])))


def _field_fn(params: MacroParams):
    model = build_model(params)

    def field(x: np.ndarray) -> np.ndarray:
        rates, _ = ex_post_derivative(model, x, 0.0, params)
        return np.asarray(rates[:N_STATE])

    return field


def reduced_jacobian(
    params: MacroParams, x_eq: MacroState, rel_step: float = 1e-6
) -> ReducedJacobian:
    """Central-difference Jacobian with per-variable steps
    rel_step * max(1, |x_j|); falls back to one-sided differences with a
    warning when a perturbation leaves the feasible region."""
    x = x_eq.to_vector()
    jac, steps = central_jacobian(_field_fn(params), x, rel_step=rel_step)
    return ReducedJacobian(matrix=jac, steps=steps, state=x_eq)


@dataclass(frozen=True)
class EigenReport:
    """Eigenvalues plus the zero-space diagnostics."""

    eigenvalues: np.ndarray           # sorted by descending real part
    spectral_radius: float
    near_zero_count: int
    null_space: np.ndarray            # orthonormal columns from the SVD
    split_angle: float                # largest principal angle of {v1, v2} to the null space
    max_real_nonzero: float           # max Re over eigenvalues outside the near-zero set

    @property
    def locally_stable(self) -> bool:
        return self.max_real_nonzero < 0.0


def eigenanalysis(jacobian: ReducedJacobian | np.ndarray) -> EigenReport:
    """Full nonsymmetric eigendecomposition with a near-zero census.

    The null space is taken from the singular vectors whose singular
    values fall below the near-zero threshold; ``split_angle`` is the
    largest principal angle between span{labor swap, financing swap} and
    that null space (small when both neutral directions are present).
    """
    a = jacobian.matrix if isinstance(jacobian, ReducedJacobian) else np.asarray(jacobian)
    if not np.all(np.isfinite(a)):
        raise ValueError("Jacobian contains non-finite entries")
    eig = np.linalg.eigvals(a)
    order = np.argsort(-eig.real)
    eig = eig[order]
    radius = float(np.max(np.abs(eig))) if len(eig) else 0.0
    thresh = NEAR_ZERO_FACTOR * radius
    near_zero = np.abs(eig) <= thresh
    _, svals, vt = np.linalg.svd(a)
    null_rows = vt[svals <= max(thresh, svals[-1] * (1 + 1e-12)), :]
    if null_rows.shape[0] == 0:
        null_rows = vt[-1:, :]
    null_space = null_rows.T
    v1, v2 = zero_directions()
    pair = np.column_stack([v1 / np.linalg.norm(v1), v2 / np.linalg.norm(v2)])
    angles = subspace_angles(pair, null_space)
    live = eig[~near_zero]
    return EigenReport(
        eigenvalues=eig,
        spectral_radius=radius,
        near_zero_count=int(np.sum(near_zero)),
        null_space=null_space,
        split_angle=float(np.max(angles)) if len(angles) else float("nan"),
        max_real_nonzero=float(np.max(live.real)) if len(live) else 0.0,
    )


@dataclass(frozen=True)
class CellClassification:
    """One cell of the stability map.

    class label: unstable_red | stable_abort_orange | converged_green |
    nonconverged_blue; green carries the time to converge, blue the
    residual relative distance at the horizon.
    """

    mu_p_scale: float
    mu_q_scale: float
    label: str
    max_re_eig: float
    time_to_converge: float | None = None
    distance: float | None = None
    note: str = ""

    def metric(self) -> float:
        if self.label == "converged_green":
            return float(self.time_to_converge)
        if self.label == "nonconverged_blue":
            return float(self.distance)
        return float("nan")


def baseline_fixed_point(params: MacroParams, horizon: float = 100.0) -> MacroState:
    """Fixed point reached from the baseline start: integrate, then polish
    with Newton from the trajectory end."""
    x0 = baseline_state(params)
    ss_traj = integrate(params, None, x0, RunConfig(t_end=horizon, rtol=1e-8, atol=1e-10,
                                                    sample_interval=1.0))
    if ss_traj.stop_reason.kind not in ("completed", "converged"):
        raise StationaryError(f"baseline run did not settle: {ss_traj.stop_reason}")
    return solve_stationary(params, ss_traj.final_state).state


def classify_point(
    mu_p_scale: float,
    mu_q_scale: float,
    params: MacroParams,
    horizon: float = 100.0,
    x_eq: MacroState | None = None,
    run_rtol: float = 1e-7,
    run_atol: float = 1e-9,
    convergence_tol: float = 0.01,
    include_rate_speed: bool = True,
) -> CellClassification:
    """Classify one (price-speed, quantity-speed) scaling combination.

    Procedure: rescale the power factors, evaluate the eigenvalues of the
    reduced Jacobian at the fixed point (which a common quantity rescale
    does not move), and if not locally unstable, integrate from the
    baseline start and decide convergence against the fixed point.
    """
    scaled = scale_powers(params, mu_p_scale, mu_q_scale, include_rate_speed)
    note = ""
    eig_ok = True
    max_re = float("nan")
    if x_eq is None:
        try:
            x_eq = baseline_fixed_point(params)
        except Exception as exc:
            return CellClassification(mu_p_scale, mu_q_scale, "stable_abort_orange",
                                      float("nan"), note=f"no fixed point: {exc}")
    # a common rescale of the power factors does not move the fixed point
    # (multipliers rescale along), so the unscaled equilibrium is reused
    try:
        rep = eigenanalysis(reduced_jacobian(scaled, x_eq))
        max_re = rep.max_real_nonzero
    except Exception as exc:
        eig_ok = False
        note = f"eigenanalysis unavailable: {exc}"
    x_eq_scaled = x_eq
    if eig_ok and max_re > 0.0:
        return CellClassification(mu_p_scale, mu_q_scale, "unstable_red", max_re, note=note)

    cfg = RunConfig(t_end=horizon, rtol=run_rtol, atol=run_atol,
                    sample_interval=0.5, convergence_tol=convergence_tol,
                    reference=x_eq_scaled, convergence_metric="invariant",
                    check_affinity=False)
    traj = integrate(scaled, None, baseline_state(scaled), cfg)
    kind = traj.stop_reason.kind
    if kind in ("positivity_abort", "solver_abort"):
        return CellClassification(mu_p_scale, mu_q_scale, "stable_abort_orange",
                                  max_re, note=note or str(traj.stop_reason))
    if kind == "converged":
        return CellClassification(mu_p_scale, mu_q_scale, "converged_green",
                                  max_re, time_to_converge=traj.stop_reason.time, note=note)
    dist = invariant_relative_deviation(traj.states[-1], x_eq_scaled.to_vector())
    if dist < convergence_tol:
        return CellClassification(mu_p_scale, mu_q_scale, "converged_green",
                                  max_re, time_to_converge=float(traj.times[-1]), note=note)
    return CellClassification(mu_p_scale, mu_q_scale, "nonconverged_blue",
                              max_re, distance=dist, note=note)


def _classify_cell(args) -> CellClassification:
    (mu_p, mu_q, params, x_eq_vec, horizon, include_rate_speed) = args
    x_eq = MacroState.from_vector(x_eq_vec) if x_eq_vec is not None else None
    try:
        return classify_point(mu_p, mu_q, params, horizon=horizon, x_eq=x_eq,
                              include_rate_speed=include_rate_speed)
    except Exception as exc:  # a cell failure never aborts the sweep
        return CellClassification(mu_p, mu_q, "stable_abort_orange", float("nan"),
                                  note=f"cell error: {exc}")


def sweep(
    grid: list[tuple[float, float]],
    params: MacroParams,
    parallelism: int = 1,
    horizon: float = 100.0,
    x_eq: MacroState | None = None,
    include_rate_speed: bool = True,
) -> list[CellClassification]:
    """Classify every (mu_p, mu_q) cell; output order matches input order
    and per-cell failures are recorded in the cell."""
    if x_eq is None:
        x_eq = baseline_fixed_point(params)
    tasks = [(mp, mq, params, x_eq.to_vector(), horizon, include_rate_speed)
             for mp, mq in grid]
    if parallelism <= 1 or len(tasks) <= 1:
        return [_classify_cell(t) for t in tasks]
    with multiprocessing.Pool(parallelism) as pool:
        return pool.map(_classify_cell, tasks)


def parameter_sensitivity(
    params: MacroParams,
    x_eq: MacroState,
    param_names: list[str],
    rel_step: float = 1e-6,
) -> np.ndarray:
    """Central-difference response of every rate to each named parameter
    at the fixed point: entry [i, j] = d xdot_i / d theta_j."""
    x = x_eq.to_vector()
    out = np.empty((N_STATE, len(param_names)))
    for j, name in enumerate(param_names):
        if name not in MacroParams.__dataclass_fields__:
            raise ValueError(f"unknown parameter {name!r}")
        base = getattr(params, name)
        h = rel_step * max(1.0, abs(base)) if base != 0.0 else rel_step
        f_hi = _field_fn(params.replace(**{name: base + h}))(x)
        f_lo = _field_fn(params.replace(**{name: base - h}))(x)
        out[:, j] = (f_hi - f_lo) / (2.0 * h)
    return out


@dataclass(frozen=True)
class GlobalRunResult:
    seed: int
    initial_state: MacroState
    stop_reason: str
    converged: bool
    time_to_converge: float | None
    production: dict[str, float] | None
    financing_split: float | None   # D_f1 at the end
    labor_split: float | None       # L_a1 at the end


@dataclass(frozen=True)
class GlobalStudyReport:
    runs: tuple[GlobalRunResult, ...]
    production_dispersion: dict[str, float]
    financing_dispersion: float
    labor_dispersion: float

    @property
    def n_converged(self) -> int:
        return sum(r.converged for r in self.runs)

    def to_dict(self) -> dict:
        return {
            "runs": [
                {
                    "seed": r.seed,
                    "stop_reason": r.stop_reason,
                    "converged": r.converged,
                    "time_to_converge": r.time_to_converge,
                    "initial_state": r.initial_state.to_dict(),
                    "production": r.production,
                    "financing_split": r.financing_split,
                    "labor_split": r.labor_split,
                }
                for r in self.runs
            ],
            "production_dispersion": self.production_dispersion,
            "financing_dispersion": self.financing_dispersion,
            "labor_dispersion": self.labor_dispersion,
        }


def _draw_state(base: np.ndarray, sigma: float, rng: np.random.Generator,
                params: MacroParams, max_tries: int = 200) -> MacroState:
    for _ in range(max_tries):
        draw = base * np.exp(sigma * rng.standard_normal(N_STATE))
        cand = MacroState.from_vector(draw)
        if validate_state(cand, params):
            continue
        dep = macro.dependents(cand, params)
        if dep.E_f1 <= 0.0 or dep.E_f2 <= 0.0:
            continue
        return cand
    raise RuntimeError(f"no feasible draw after {max_tries} tries (sigma={sigma})")


def _run_study_case(args) -> GlobalRunResult:
    (params, x0_vec, horizon, seed) = args
    x0 = MacroState.from_vector(x0_vec)
    cfg = RunConfig(t_end=horizon, rtol=1e-7, atol=1e-9, sample_interval=0.5,
                    check_affinity=False)
    try:
        traj = integrate(params, None, x0, cfg)
    except Exception as exc:
        return GlobalRunResult(seed, x0, f"error: {exc}", False, None, None, None, None)
    kind = traj.stop_reason.kind
    if kind not in ("completed", "converged"):
        return GlobalRunResult(seed, x0, str(traj.stop_reason), False, None, None, None, None)
    final = traj.final_state
    try:
        fp = solve_stationary(params, final, max_iter=60)
    except StationaryError:
        return GlobalRunResult(seed, x0, "no stationary state from final state",
                               False, None, None, None, None)
    t_conv = detect_convergence(traj, fp.state, tol=0.01, metric="invariant")
    prod = production_profile(fp.state, params)
    return GlobalRunResult(
        seed, x0, str(traj.stop_reason), t_conv is not None, t_conv,
        prod, fp.state.D_f1, fp.state.L_a1,
    )


def randomized_global_study(
    params: MacroParams,
    n_runs: int,
    seed: int,
    perturbation_scale: float,
    horizon: float = 100.0,
    parallelism: int = 1,
) -> GlobalStudyReport:
    """Integrate from log-normally perturbed starts and compare the
    stationary states reached.

    Converged runs agree on the real allocation; the financing and labor
    splits (and the nominal level, pinned to each start through the
    policy-rate rule) stay path dependent.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    base = baseline_state(params).to_vector()
    children = np.random.SeedSequence(seed).spawn(n_runs)
    tasks = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        x0 = base.copy() if perturbation_scale == 0.0 else _draw_state(
            base, perturbation_scale, rng, params).to_vector()
        tasks.append((params, x0, horizon, i))
    if parallelism <= 1 or n_runs == 1:
        runs = [_run_study_case(t) for t in tasks]
    else:
        with multiprocessing.Pool(parallelism) as pool:
            runs = pool.map(_run_study_case, tasks)

    conv = [r for r in runs if r.converged]
    prod_disp: dict[str, float] = {}
    for name in PRODUCTION_VARIABLES:
        vals = [r.production[name] for r in conv]
        if len(vals) >= 2:
            mean = float(np.mean(vals))
            prod_disp[name] = float((max(vals) - min(vals)) / max(abs(mean), 1e-30))
    def spread(vals: list[float]) -> float:
        if len(vals) < 2:
            return 0.0
        mean = float(np.mean(vals))
        return float((max(vals) - min(vals)) / max(abs(mean), 1e-30))
    return GlobalStudyReport(
        runs=tuple(runs),
        production_dispersion=prod_disp,
        financing_dispersion=spread([r.financing_split for r in conv]),
        labor_dispersion=spread([r.labor_split for r in conv]),
    )
