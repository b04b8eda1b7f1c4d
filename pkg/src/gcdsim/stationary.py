"""Stationary states: damped Newton solve and analytic verification.

The fixed point is found directly on the stationarity system (the
realized derivative of the 25 free variables), independently of time
integration.  Stationary states are not isolated: the labor split,
the firm financing split and further financial compositions are neutral,
so the Newton step is computed by least squares with pinning equations
that select one representative near the guess.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import macro
from .core import InfeasibleStateError, ex_post_derivative
from .macro import (
    LAMBDA_NAMES,
    MacroParams,
    MacroState,
    N_STATE,
    STATE_NAMES,
    build_model,
    dependents,
    utilities,
)
from .numdiff import central_jacobian

__all__ = [
    "StationaryState",
    "StationaryError",
    "VerificationReport",
    "VerificationItem",
    "solve_stationary",
    "verify_stationary",
    "stationarity_residual",
]

# quantities kept strictly positive during the damped Newton iteration
_GUARDED = tuple(STATE_NAMES.index(n) for n in (
    "K_f1", "K_f2", "A_12", "A_21", "C_a1", "C_a2", "C_b1", "C_b2",
    "G_g1", "G_g2", "L_a1", "L_a2", "L_b1", "L_b2", "p_1", "p_2", "w_1", "w_2",
))

# pinned coordinates regularizing the neutral directions
_DEFAULT_PINS = ("L_a1", "D_f1")


class StationaryError(RuntimeError):
    """Newton failed to reach a stationary state."""


@dataclass(frozen=True)
class StationaryState:
    """A fixed point with the multipliers at rest (the mismatch
    multipliers vanish; the budget multipliers generally do not)."""

    state: MacroState
    lambdas: np.ndarray
    residual_norm: float
    iterations: int

    def lambdas_by_name(self) -> dict[str, float]:
        return dict(zip(LAMBDA_NAMES, (float(v) for v in self.lambdas)))


def stationarity_residual(
    state: MacroState | np.ndarray, params: MacroParams
) -> np.ndarray:
    """Realized time derivative of the 25 free variables (zero at a fixed
    point)."""
    vec = state.to_vector() if isinstance(state, MacroState) else np.asarray(state, float)
    model = build_model(params)
    rates, _ = ex_post_derivative(model, vec, 0.0, params)
    return np.asarray(rates[:N_STATE])


def solve_stationary(
    params: MacroParams,
    guess: MacroState,
    tol: float = 1e-11,
    max_iter: int = 200,
    pins: tuple[str, ...] = _DEFAULT_PINS,
) -> StationaryState:
    """Damped Gauss-Newton to a stationary state near ``guess``.

    Steps solve the stacked system [J; pin rows] in the least-squares
    sense (minimum norm along the remaining neutral directions), with a
    fraction-to-boundary safeguard keeping every guarded quantity above
    half its current distance to zero and halving on residual increase.

    Raises ``StationaryError`` on stall or iteration exhaustion; with
    rho_a != rho_b no fixed point exists (the deposit rate cannot equal
    two distinct time preferences) and the solver fails accordingly.
    """
    model = build_model(params)

    def field(x: np.ndarray) -> np.ndarray:
        rates, _ = ex_post_derivative(model, x, 0.0, params)
        return np.asarray(rates[:N_STATE])

    pin_idx = [STATE_NAMES.index(n) for n in pins]
    x = guess.to_vector()
    pin_vals = [x[i] for i in pin_idx]
    rn = float(np.max(np.abs(field(x))))
    hint = "" if params.rho_a == params.rho_b else (
        " (rho_a != rho_b: the deposit rate cannot settle at two time preferences,"
        " no stationary state exists)"
    )

    it = 0
    for it in range(1, max_iter + 1):
        if rn <= tol:
            break
        jac, _ = central_jacobian(field, x, rel_step=1e-7)
        rows = np.zeros((len(pin_idx), N_STATE))
        rhs_pin = np.empty(len(pin_idx))
        for k, i in enumerate(pin_idx):
            rows[k, i] = 1.0
            rhs_pin[k] = pin_vals[k] - x[i]
        stacked = np.vstack([jac, rows])
        target = np.concatenate([-field(x), rhs_pin])
        dx, *_ = np.linalg.lstsq(stacked, target, rcond=None)
        # fraction-to-boundary: lose at most half the distance to zero
        step = 1.0
        for i in _GUARDED:
            if dx[i] < 0.0 and x[i] + dx[i] < 0.5 * x[i]:
                step = min(step, 0.5 * x[i] / -dx[i])
        accepted = False
        for _ in range(60):
            xn = x + step * dx
            try:
                rnew = float(np.max(np.abs(field(xn))))
            except InfeasibleStateError:
                step *= 0.5
                continue
            if rnew < rn or rnew <= tol:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            raise StationaryError(
                f"Newton stalled at residual {rn:.3e} after {it} iterations{hint}"
            )
        x, rn = xn, rnew
    if rn > max(tol, 1e-10):
        raise StationaryError(
            f"no convergence after {max_iter} iterations, residual {rn:.3e}{hint}"
        )
    rates, sol = ex_post_derivative(model, x, 0.0, params)
    return StationaryState(
        state=MacroState.from_vector(x),
        lambdas=np.asarray(sol.lambdas),
        residual_norm=rn,
        iterations=it,
    )


@dataclass(frozen=True)
class VerificationItem:
    name: str
    residual: float
    scale: float
    tol: float

    @property
    def relative(self) -> float:
        return abs(self.residual) / self.scale

    @property
    def passed(self) -> bool:
        return self.relative <= self.tol


@dataclass(frozen=True)
class VerificationReport:
    """Analytic stationary-state identities checked by direct substitution."""

    items: tuple[VerificationItem, ...]

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items)

    def __getitem__(self, name: str) -> VerificationItem:
        for item in self.items:
            if item.name == name:
                return item
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            item.name: {
                "residual": item.residual,
                "relative": item.relative,
                "tol": item.tol,
                "passed": item.passed,
            }
            for item in self.items
        }


def verify_stationary(
    ss: StationaryState, params: MacroParams, rel_tol: float = 1e-6
) -> VerificationReport:
    """Check the closed-form equilibrium identities at a fixed point:
    inventory targets, factor-share relations, the profit-equals-return-
    on-equity identity, household first-order-condition equalization, the
    saving condition, wage equality, the sectoral income identity, and
    government budget closure."""
    s = ss.state
    p = params
    d = dependents(s, p)
    u = utilities(s, p)
    items: list[VerificationItem] = []

    def add(name: str, residual: float, scale: float, tol: float = rel_tol):
        items.append(VerificationItem(name, float(residual), float(max(scale, 1e-30)), tol))

    # factor-share block, sector by sector
    for tag, (Pf, K, Lf, A_in, p_own, p_other, w, r, s_top, kap, ell) in {
        "f1": (d.P_f1, s.K_f1, d.L_f1, s.A_21, s.p_1, s.p_2, s.w_1, d.r_f1,
               p.s_top_f1, p.kappa_1, p.l_1),
        "f2": (d.P_f2, s.K_f2, d.L_f2, s.A_12, s.p_2, s.p_1, s.w_2, d.r_f2,
               p.s_top_f2, p.kappa_2, p.l_2),
    }.items():
        S = s.S_f1 if tag == "f1" else s.S_f2
        one_rs = 1.0 - r * s_top
        add(f"inventory_target_{tag}", S - s_top * Pf, max(abs(S), s_top * Pf, 1e-6))
        add(f"capital_share_{tag}",
            (r + p.delta_K) * p_own * K - p_own * one_rs * kap * Pf,
            p_own * Pf)
        add(f"intermediate_share_{tag}",
            p_other * A_in - p_own * one_rs * (1.0 - kap - ell) * Pf,
            p_own * Pf)
        add(f"labor_share_{tag}", w * Lf - p_own * one_rs * ell * Pf, p_own * Pf)
    add("profit_identity_f1", d.pi_f1 - d.r_f1 * d.E_f1, abs(d.r_f1 * d.E_f1))
    add("profit_identity_f2", d.pi_f2 - d.r_f2 * d.E_f2, abs(d.r_f2 * d.E_f2))

    # household first-order conditions: all marginal ratios equalized
    ratios_a = (u.a_leisure_w1, u.a_leisure_w2, u.a_cons_1, u.a_cons_2)
    ratios_b = (u.b_leisure_w1, u.b_leisure_w2, u.b_cons_1, u.b_cons_2)
    add("foc_household_a", max(ratios_a) - min(ratios_a), max(ratios_a))
    add("foc_household_b", max(ratios_b) - min(ratios_b), max(ratios_b))
    add("saving_a", d.r_M - p.rho_a, max(abs(p.rho_a), 1e-6))
    add("saving_b", d.r_M - p.rho_b, max(abs(p.rho_b), 1e-6))
    add("wage_equality", s.w_1 - s.w_2, s.w_1)

    # income identity: distributed income = production - intermediates - depreciation
    add("income_identity_f1",
        (d.pi_f1 + d.r_f1 * s.D_f1 + s.w_1 * d.L_f1)
        - (s.p_1 * d.P_f1 - s.p_2 * s.A_21 - p.delta_K * s.p_1 * s.K_f1),
        s.p_1 * d.P_f1)
    add("income_identity_f2",
        (d.pi_f2 + d.r_f2 * s.D_f2 + s.w_2 * d.L_f2)
        - (s.p_2 * d.P_f2 - s.p_1 * s.A_12 - p.delta_K * s.p_2 * s.K_f2),
        s.p_2 * d.P_f2)

    # government budget closure in both stated forms
    taxes = d.T_a + d.T_b
    add("gov_budget", s.r_g * d.D_g + s.p_1 * s.G_g1 + s.p_2 * s.G_g2 - taxes,
        max(taxes, 1e-6))
    add("gov_budget_tax_form",
        p.theta * s.p_1 * (1 - d.r_f1 * p.s_top_f1) * p.l_1 * d.P_f1
        + p.theta * s.p_2 * (1 - d.r_f2 * p.s_top_f2) * p.l_2 * d.P_f2
        - taxes,
        max(taxes, 1e-6))
    return VerificationReport(tuple(items))
