"""Six-sector macroeconomic model as a concrete constrained-dynamics system.

Two household sectors (a, b), two production sectors (f1, f2), a bank and
the government trade two goods, labor and credit.  The phase space has 25
free variables; 17 further quantities (taxes, sectoral labor, the interest
rates marching in lockstep, equities, net worths, government credit and
the profit flows) are algebraic dependents, so every balance-sheet and
bookkeeping identity holds exactly by construction.  Seven closure
constraints carry Lagrangian multipliers:

    budget_a, budget_b, budget_g    household / government budgets
    labor_1, labor_2                sectoral labor market clearing
    goods_1, goods_2                production = uses of each good

Households and firms push variables along the gradients of their utility
and expected-profit functions, weighted by power factors; deposits,
government debt and inventories follow explicit rules.  Prices, wages and
the policy rate move proportionally to the mismatch multipliers, and firm
credit follows nominal investment, so these variables enter the generic
layer with pure multiplier coefficients instead of behavioral forces.

Sectoral labor inputs and government credit are dependents whose *rates*
still carry forces and appear in constraints; they live in auxiliary rate
slots 25..27 behind the integrated state.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import (
    ConstraintDef,
    ForceTerm,
    InfeasibleStateError,
    ModelDefinition,
    VariableId,
)

__all__ = [
    "MacroParams",
    "MacroState",
    "DependentQuantities",
    "UtilityRecord",
    "STATE_NAMES",
    "AUX_NAMES",
    "EXT_NAMES",
    "N_STATE",
    "N_EXT",
    "LAMBDA_NAMES",
    "QUANTITY_POWER_FIELDS",
    "PRICE_POWER_FIELDS",
    "dependents",
    "build_model",
    "utilities",
    "validate_state",
    "validate_params",
    "baseline_state",
    "zero_directions",
    "scale_powers",
]

# Free variables, ordered as in the stability reduction; auxiliary rate
# channels (levels algebraic, rates dynamic) follow the integrated state.
STATE_NAMES = (
    "K_f1", "K_f2",
    "L_a1", "L_a2", "L_b1", "L_b2",
    "C_a1", "C_a2", "C_b1", "C_b2",
    "G_g1", "G_g2",
    "r_g", "w_1", "w_2", "p_1", "p_2",
    "S_f1", "S_f2",
    "M_a", "M_b",
    "D_f1", "D_f2",
    "A_12", "A_21",
)
AUX_NAMES = ("L_f1", "L_f2", "D_g")
EXT_NAMES = STATE_NAMES + AUX_NAMES
N_STATE = len(STATE_NAMES)
N_EXT = len(EXT_NAMES)

_I = {name: i for i, name in enumerate(EXT_NAMES)}
(
    K_F1, K_F2, L_A1, L_A2, L_B1, L_B2, C_A1, C_A2, C_B1, C_B2,
    G_G1, G_G2, R_G, W_1, W_2, P_1, P_2, S_F1, S_F2, M_A, M_B,
    D_F1, D_F2, A_12, A_21, LX_F1, LX_F2, DX_G,
) = range(N_EXT)

LAMBDA_NAMES = ("lambda_a", "lambda_b", "lambda_g",
                "lambda_L1", "lambda_L2", "lambda_P1", "lambda_P2")

# Power factors grouped the way the stability sweep scales them; the
# adaptation speed of the policy rate is grouped with the price factors
# by default (it governs a price-like variable).
QUANTITY_POWER_FIELDS = (
    "mu_aL1", "mu_aL2", "mu_aC1", "mu_aC2", "mu_aM", "mu_aG1",
    "mu_bL1", "mu_bL2", "mu_bC1", "mu_bC2", "mu_bM", "mu_bG2",
    "mu_gD",
    "mu_fK1", "mu_fK2", "mu_fL1", "mu_fL2",
    "mu_fA1", "mu_fA2", "mu_fS1", "mu_fS2",
)
PRICE_POWER_FIELDS = ("mu_p1", "mu_p2", "mu_w")

# State components that must stay strictly positive for the forces to be
# evaluable (fractional powers, divisions); individual labor flows enter
# only linearly and through leisure and the sector totals, so they are
# guarded by the integrator's positivity policy, not rejected here.
# Inventories, deposits and firm credit may go negative, negative
# inventories being unfilled orders.
_POSITIVE_STATE = (
    K_F1, K_F2, C_A1, C_A2, C_B1, C_B2,
    G_G1, G_G2, W_1, W_2, P_1, P_2, A_12, A_21,
)

# Quantities the integrator keeps away from zero: the evaluable set plus
# the individual labor flows and household leisure.
GUARDED_QUANTITIES = tuple(
    [STATE_NAMES[i] for i in _POSITIVE_STATE]
    + ["L_a1", "L_a2", "L_b1", "L_b2", "leisure_a", "leisure_b"]
)


@dataclass(frozen=True)
class MacroParams:
    """Model parameters and power factors; defaults are the baseline set."""

    # household a: utility exponents, saving rule, ownership share
    alpha_L: float = 0.4
    alpha_C1: float = 0.2
    alpha_C2: float = 0.25
    alpha_G1: float = 0.5
    alpha_r: float = 4.0
    rho_a: float = 0.06
    e_a: float = 0.2
    # household b
    beta_L: float = 0.4
    beta_C1: float = 0.25
    beta_C2: float = 0.2
    beta_G2: float = 0.5
    beta_r: float = 4.0
    rho_b: float = 0.06
    # government; the debt-aversion weight applies to price-deflated debt
    gamma_D: float = 10.0
    gamma_r: float = 0.0
    theta: float = 0.2
    rho_top: float = 0.0
    # technology
    kappa_1: float = 0.25
    kappa_2: float = 0.3
    l_1: float = 0.7
    l_2: float = 0.55
    delta_K: float = 0.05
    s_top_f1: float = 0.1
    s_top_f2: float = 0.1
    # power factors: households
    mu_aL1: float = 2.0
    mu_aL2: float = 2.0
    mu_aC1: float = 2.0
    mu_aC2: float = 2.0
    mu_aM: float = 2.0
    mu_aG1: float = 2.0
    mu_bL1: float = 2.0
    mu_bL2: float = 2.0
    mu_bC1: float = 2.0
    mu_bC2: float = 2.0
    mu_bM: float = 2.0
    mu_bG2: float = 2.0
    # power factors: government and firms
    mu_gD: float = 2.0
    mu_fK1: float = 1.0
    mu_fK2: float = 1.0
    mu_fL1: float = 2.0
    mu_fL2: float = 2.0
    mu_fA1: float = 2.0
    mu_fA2: float = 2.0
    mu_fS1: float = 2.0
    mu_fS2: float = 2.0
    # price, wage and interest adaptation speeds
    mu_p1: float = 50.0
    mu_p2: float = 50.0
    mu_w: float = 50.0
    mu_r: float = 20.0
    # social interaction on consumption (active only when conspicuous)
    mu_abC: float = 1.0
    mu_baC: float = 1.0
    conspicuous: bool = False
    # interest-rate offsets against the policy rate, fixed at t = 0
    r_f1_offset: float = 0.0
    r_f2_offset: float = 0.0
    r_M_offset: float = -0.001

    def replace(self, **changes) -> "MacroParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def validate_params(params: MacroParams) -> list[str]:
    """Violation messages, empty when the parameter record is admissible."""
    bad: list[str] = []
    p = params
    for name in ("alpha_L", "alpha_C1", "alpha_C2", "alpha_G1",
                 "beta_L", "beta_C1", "beta_C2", "beta_G2"):
        v = getattr(p, name)
        if not 0.0 < v < 1.0:
            bad.append(f"{name} must lie in (0, 1), got {v}")
    if not 0.0 <= p.theta < 1.0:
        bad.append(f"theta must lie in [0, 1), got {p.theta}")
    if not 0.0 <= p.e_a <= 1.0:
        bad.append(f"e_a must lie in [0, 1], got {p.e_a}")
    for kappa, ell, names in ((p.kappa_1, p.l_1, "kappa_1 + l_1"),
                              (p.kappa_2, p.l_2, "kappa_2 + l_2")):
        if kappa <= 0.0 or ell <= 0.0 or kappa + ell >= 1.0:
            bad.append(f"{names} must be positive with sum below 1")
    if p.delta_K < 0.0:
        bad.append(f"delta_K must be nonnegative, got {p.delta_K}")
    for name in ("s_top_f1", "s_top_f2"):
        if getattr(p, name) < 0.0:
            bad.append(f"{name} must be nonnegative, got {getattr(p, name)}")
    for f in dataclasses.fields(p):
        if f.name.startswith("mu_") and getattr(p, f.name) < 0.0:
            bad.append(f"{f.name} must be nonnegative, got {getattr(p, f.name)}")
    return bad


@dataclass(frozen=True)
class MacroState:
    """One point of the 25-dimensional phase space."""

    K_f1: float
    K_f2: float
    L_a1: float
    L_a2: float
    L_b1: float
    L_b2: float
    C_a1: float
    C_a2: float
    C_b1: float
    C_b2: float
    G_g1: float
    G_g2: float
    r_g: float
    w_1: float
    w_2: float
    p_1: float
    p_2: float
    S_f1: float
    S_f2: float
    M_a: float
    M_b: float
    D_f1: float
    D_f2: float
    A_12: float
    A_21: float

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in STATE_NAMES])

    @classmethod
    def from_vector(cls, vec: Sequence[float]) -> "MacroState":
        if len(vec) != N_STATE:
            raise ValueError(f"expected {N_STATE} components, got {len(vec)}")
        return cls(*(float(v) for v in vec))

    def replace(self, **changes) -> "MacroState":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def baseline_state(params: MacroParams | None = None) -> MacroState:
    """Baseline initial conditions.

    Firm credit is backed out of the equity book values (1.07 and 1.71)
    through the balance-sheet identities, so the state satisfies them
    exactly.
    """
    p_1, p_2 = 1.94, 2.49
    K_f1, S_f1, E_f1 = 0.72, 0.21, 1.07
    K_f2, S_f2, E_f2 = 0.68, 0.09, 1.71
    return MacroState(
        K_f1=K_f1, K_f2=K_f2,
        L_a1=0.06, L_a2=0.21, L_b1=0.11, L_b2=0.19,
        C_a1=0.15, C_a2=0.11, C_b1=0.13, C_b2=0.08,
        G_g1=0.05, G_g2=0.02,
        r_g=0.05, w_1=1.50, w_2=1.60, p_1=p_1, p_2=p_2,
        S_f1=S_f1, S_f2=S_f2,
        M_a=0.45, M_b=0.74,
        D_f1=p_1 * (K_f1 + S_f1) - E_f1,
        D_f2=p_2 * (K_f2 + S_f2) - E_f2,
        A_12=0.02, A_21=0.01,
    )


@dataclass(frozen=True)
class DependentQuantities:
    """The 17 constraint-determined quantities plus the two production flows."""

    L_f1: float
    L_f2: float
    T_a: float
    T_b: float
    r_f1: float
    r_f2: float
    r_M: float
    E_f1: float
    E_f2: float
    E_bank: float
    V_a: float
    V_b: float
    D_g: float
    V_g: float
    pi_f1: float
    pi_f2: float
    pi_bank: float
    P_f1: float
    P_f2: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class _Ctx:
    """Evaluation context: state components, dependents and cached
    marginal quantities shared by every force, coefficient and residual."""

    __slots__ = (
        "k1", "k2", "la1", "la2", "lb1", "lb2", "ca1", "ca2", "cb1", "cb2",
        "gg1", "gg2", "rg", "w1", "w2", "p1", "p2", "sf1", "sf2", "ma", "mb",
        "df1", "df2", "a12", "a21",
        "lf1", "lf2", "dg",
        "r_f1", "r_f2", "r_M", "E_f1", "E_f2", "V_a", "V_b", "V_g",
        "T_a", "T_b", "pi_f1", "pi_f2", "pi_bank", "pi_total",
        "P1", "P2", "mpK1", "mpL1", "mpA1", "mpK2", "mpL2", "mpA2",
        "leisure_a", "leisure_b", "mlu_a", "mlu_b",
        "du_a_c1", "du_a_c2", "du_b_c1", "du_b_c2", "du_g1", "du_g2",
        "grad_K1", "grad_K2", "grad_L1", "grad_L2", "grad_A1", "grad_A2",
        "inv_buf1", "inv_buf2", "xk1", "xk2", "xs1", "xs2",
        "net_wage_sum",
    )


def _make_context(state, time: float, p: MacroParams) -> _Ctx:
    vals = state.tolist() if isinstance(state, np.ndarray) else list(state)
    for i in _POSITIVE_STATE:
        v = vals[i]
        if not v > 0.0 or not math.isfinite(v):
            raise InfeasibleStateError(
                f"{STATE_NAMES[i]} = {v!r} outside the positive domain"
            )
    c = _Ctx()
    (c.k1, c.k2, c.la1, c.la2, c.lb1, c.lb2, c.ca1, c.ca2, c.cb1, c.cb2,
     c.gg1, c.gg2, c.rg, c.w1, c.w2, c.p1, c.p2, c.sf1, c.sf2, c.ma, c.mb,
     c.df1, c.df2, c.a12, c.a21) = vals[:N_STATE]
    c.leisure_a = 1.0 - c.la1 - c.la2
    c.leisure_b = 1.0 - c.lb1 - c.lb2
    if c.leisure_a <= 0.0:
        raise InfeasibleStateError(f"leisure of household a = {c.leisure_a!r} <= 0")
    if c.leisure_b <= 0.0:
        raise InfeasibleStateError(f"leisure of household b = {c.leisure_b!r} <= 0")
    for v in (c.la1, c.la2, c.lb1, c.lb2, c.rg, c.sf1, c.sf2, c.ma, c.mb,
              c.df1, c.df2):
        if not math.isfinite(v):
            raise InfeasibleStateError("state contains a non-finite component")

    c.lf1 = c.la1 + c.lb1
    c.lf2 = c.la2 + c.lb2
    if c.lf1 <= 0.0:
        raise InfeasibleStateError(f"sector f1 labor input = {c.lf1!r} <= 0")
    if c.lf2 <= 0.0:
        raise InfeasibleStateError(f"sector f2 labor input = {c.lf2!r} <= 0")
    c.r_f1 = c.rg + p.r_f1_offset
    c.r_f2 = c.rg + p.r_f2_offset
    c.r_M = c.rg + p.r_M_offset

    c.P1 = c.k1 ** p.kappa_1 * c.lf1 ** p.l_1 * c.a21 ** (1.0 - p.kappa_1 - p.l_1)
    c.P2 = c.k2 ** p.kappa_2 * c.lf2 ** p.l_2 * c.a12 ** (1.0 - p.kappa_2 - p.l_2)
    c.mpK1 = p.kappa_1 * c.P1 / c.k1
    c.mpL1 = p.l_1 * c.P1 / c.lf1
    c.mpA1 = (1.0 - p.kappa_1 - p.l_1) * c.P1 / c.a21
    c.mpK2 = p.kappa_2 * c.P2 / c.k2
    c.mpL2 = p.l_2 * c.P2 / c.lf2
    c.mpA2 = (1.0 - p.kappa_2 - p.l_2) * c.P2 / c.a12

    c.E_f1 = c.p1 * (c.k1 + c.sf1) - c.df1
    c.E_f2 = c.p2 * (c.k2 + c.sf2) - c.df2
    c.dg = c.ma + c.mb - c.df1 - c.df2  # bank equity is identically zero
    c.V_a = c.ma + p.e_a * (c.E_f1 + c.E_f2)
    c.V_b = c.mb + (1.0 - p.e_a) * (c.E_f1 + c.E_f2)
    c.V_g = -c.dg
    c.T_a = p.theta * (c.w1 * c.la1 + c.w2 * c.la2)
    c.T_b = p.theta * (c.w1 * c.lb1 + c.w2 * c.lb2)
    c.pi_f1 = (c.p1 * c.P1 - c.p1 * p.delta_K * c.k1 - c.p2 * c.a21
               - c.w1 * c.lf1 - c.r_f1 * c.df1)
    c.pi_f2 = (c.p2 * c.P2 - c.p2 * p.delta_K * c.k2 - c.p1 * c.a12
               - c.w2 * c.lf2 - c.r_f2 * c.df2)
    c.pi_bank = (c.r_f1 * c.df1 + c.r_f2 * c.df2 + c.rg * c.dg
                 - c.r_M * (c.ma + c.mb))
    c.pi_total = c.pi_f1 + c.pi_f2 + c.pi_bank

    c.mlu_a = p.alpha_L * c.leisure_a ** (p.alpha_L - 1.0)
    c.mlu_b = p.beta_L * c.leisure_b ** (p.beta_L - 1.0)
    c.du_a_c1 = p.alpha_C1 * c.ca1 ** (p.alpha_C1 - 1.0) * c.ca2 ** p.alpha_C2
    c.du_a_c2 = p.alpha_C2 * c.ca1 ** p.alpha_C1 * c.ca2 ** (p.alpha_C2 - 1.0)
    c.du_b_c1 = p.beta_C1 * c.cb1 ** (p.beta_C1 - 1.0) * c.cb2 ** p.beta_C2
    c.du_b_c2 = p.beta_C2 * c.cb1 ** p.beta_C1 * c.cb2 ** (p.beta_C2 - 1.0)
    c.du_g1 = p.alpha_G1 * c.gg1 ** (p.alpha_G1 - 1.0)
    c.du_g2 = p.beta_G2 * c.gg2 ** (p.beta_G2 - 1.0)
    c.net_wage_sum = (1.0 - p.theta) * (c.w1 + c.w2)

    one_rs1 = 1.0 - c.r_f1 * p.s_top_f1
    one_rs2 = 1.0 - c.r_f2 * p.s_top_f2
    c.grad_K1 = c.p1 * (one_rs1 * c.mpK1 - p.delta_K - c.r_f1)
    c.grad_K2 = c.p2 * (one_rs2 * c.mpK2 - p.delta_K - c.r_f2)
    c.grad_L1 = c.p1 * one_rs1 * c.mpL1 - c.w1
    c.grad_L2 = c.p2 * one_rs2 * c.mpL2 - c.w2
    c.grad_A1 = c.p1 * one_rs1 * c.mpA1 - c.p2
    c.grad_A2 = c.p2 * one_rs2 * c.mpA2 - c.p1

    c.inv_buf1 = 1.0 / (1.0 + p.mu_fS1 * p.s_top_f1)
    c.inv_buf2 = 1.0 / (1.0 + p.mu_fS2 * p.s_top_f2)
    c.xk1 = p.mu_fK1 * c.grad_K1
    c.xk2 = p.mu_fK2 * c.grad_K2
    c.xs1 = p.mu_fS1 * (p.s_top_f1 * c.P1 - c.sf1) * c.inv_buf1
    c.xs2 = p.mu_fS2 * (p.s_top_f2 * c.P2 - c.sf2) * c.inv_buf2
    return c


def dependents(state: MacroState | Sequence[float], params: MacroParams) -> DependentQuantities:
    """The constraint-determined quantities at a state (pure algebra).

    Wealth always decomposes into the real stocks: the net worths sum to
    the nominal value of capital plus inventories because all credit
    relations cancel.
    """
    vec = state.to_vector() if isinstance(state, MacroState) else np.asarray(state)
    c = _make_context(vec, 0.0, params)
    return DependentQuantities(
        L_f1=c.lf1, L_f2=c.lf2, T_a=c.T_a, T_b=c.T_b,
        r_f1=c.r_f1, r_f2=c.r_f2, r_M=c.r_M,
        E_f1=c.E_f1, E_f2=c.E_f2, E_bank=0.0,
        V_a=c.V_a, V_b=c.V_b, D_g=c.dg, V_g=c.V_g,
        pi_f1=c.pi_f1, pi_f2=c.pi_f2, pi_bank=c.pi_bank,
        P_f1=c.P1, P_f2=c.P2,
    )


# --- forces -----------------------------------------------------------------
# Household and firm forces are the analytic utility / expected-profit
# gradients; deposits, government debt and inventories follow rules.

def _f_labor_a(s, t, p, c):
    return -c.mlu_a


def _f_labor_b(s, t, p, c):
    return -c.mlu_b


def _f_cons_a1(s, t, p, c):
    return c.du_a_c1


def _f_cons_a2(s, t, p, c):
    return c.du_a_c2


def _f_cons_b1(s, t, p, c):
    return c.du_b_c1


def _f_cons_b2(s, t, p, c):
    return c.du_b_c2


def _f_social_a1(s, t, p, c):
    return c.cb1


def _f_social_a2(s, t, p, c):
    return c.cb2


def _f_social_b1(s, t, p, c):
    return c.ca1


def _f_social_b2(s, t, p, c):
    return c.ca2


def _f_gov_g1(s, t, p, c):
    return c.du_g1


def _f_gov_g2(s, t, p, c):
    return c.du_g2


def _f_saving_a(s, t, p, c):
    return (1.0 + p.alpha_r * (c.r_M - p.rho_a)) * 2.0 * c.mlu_a / c.net_wage_sum


def _f_saving_b(s, t, p, c):
    return (1.0 + p.beta_r * (c.r_M - p.rho_b)) * 2.0 * c.mlu_b / c.net_wage_sum


def _f_gov_debt(s, t, p, c):
    # aversion to price-deflated debt; switches off at nonpositive debt.
    # The squared deflator keeps the whole system homogeneous in the
    # nominal level, which the policy-rate rule requires for any
    # stationary state to be reachable.
    if c.dg <= 0.0:
        return 0.0
    pbar = 0.5 * (c.p1 + c.p2)
    return -(p.gamma_D + p.gamma_r * c.rg) * c.dg / (pbar * pbar)


def _f_capital_1(s, t, p, c):
    return c.grad_K1


def _f_capital_2(s, t, p, c):
    return c.grad_K2


def _f_labor_f1(s, t, p, c):
    return c.grad_L1


def _f_labor_f2(s, t, p, c):
    return c.grad_L2


def _f_interm_1(s, t, p, c):
    return c.grad_A1


def _f_interm_2(s, t, p, c):
    return c.grad_A2


def _f_inventory_1(s, t, p, c):
    # buffer equation solved for the own rate, hence the denominator
    return (p.s_top_f1 * c.P1 - c.sf1) * c.inv_buf1


def _f_inventory_2(s, t, p, c):
    return (p.s_top_f2 * c.P2 - c.sf2) * c.inv_buf2


def _f_credit_1(s, t, p, c):
    # credit finances nominal ex-ante investment and inventory build-up
    return c.p1 * (c.xk1 + c.xs1)


def _f_credit_2(s, t, p, c):
    return c.p2 * (c.xk2 + c.xs2)


def _f_rate_target(s, t, p, c):
    return -p.rho_top


# --- constraint-force coefficients ------------------------------------------

def _c_one(s, t, p, c):
    return 1.0


def _c_minus_one(s, t, p, c):
    return -1.0


def _c_net_wage_1(s, t, p, c):
    return -c.w1 * (1.0 - p.theta)


def _c_net_wage_2(s, t, p, c):
    return -c.w2 * (1.0 - p.theta)


def _c_p1(s, t, p, c):
    return c.p1


def _c_p2(s, t, p, c):
    return c.p2


def _c_mu_w(s, t, p, c):
    return p.mu_w


def _c_mpK1(s, t, p, c):
    return c.mpK1


def _c_mpL1(s, t, p, c):
    return c.mpL1


def _c_mpA1(s, t, p, c):
    return c.mpA1


def _c_mpK2(s, t, p, c):
    return c.mpK2


def _c_mpL2(s, t, p, c):
    return c.mpL2


def _c_mpA2(s, t, p, c):
    return c.mpA2


def _c_buffer_1(s, t, p, c):
    return -c.inv_buf1


def _c_buffer_2(s, t, p, c):
    return -c.inv_buf2


def _c_credit_1(s, t, p, c):
    return c.p1 * (c.mpK1 - c.inv_buf1)


def _c_credit_2(s, t, p, c):
    return c.p2 * (c.mpK2 - c.inv_buf2)


def _c_mu_p1(s, t, p, c):
    return p.mu_p1


def _c_mu_p2(s, t, p, c):
    return p.mu_p2


def _c_rate_p1(s, t, p, c):
    return p.mu_r * p.mu_p1 / (2.0 * c.p1)


def _c_rate_p2(s, t, p, c):
    return p.mu_r * p.mu_p2 / (2.0 * c.p2)


# --- constraint residuals ----------------------------------------------------

def _z_budget_a(s, d, t, p, c):
    return (d[M_A] + c.p1 * c.ca1 + c.p2 * c.ca2
            - (1.0 - p.theta) * (c.w1 * c.la1 + c.w2 * c.la2)
            - p.e_a * c.pi_total - c.r_M * c.ma)


def _z_budget_b(s, d, t, p, c):
    return (d[M_B] + c.p1 * c.cb1 + c.p2 * c.cb2
            - (1.0 - p.theta) * (c.w1 * c.lb1 + c.w2 * c.lb2)
            - (1.0 - p.e_a) * c.pi_total - c.r_M * c.mb)


def _z_budget_g(s, d, t, p, c):
    return (c.p1 * c.gg1 + c.p2 * c.gg2
            - p.theta * (c.w1 * c.la1 + c.w2 * c.la2 + c.w1 * c.lb1 + c.w2 * c.lb2)
            + c.rg * c.dg - d[DX_G])


def _z_labor_1(s, d, t, p, c):
    # level identity holds by construction; its rate must stay zero
    return d[L_A1] + d[L_B1] - d[LX_F1]


def _z_labor_2(s, d, t, p, c):
    return d[L_A2] + d[L_B2] - d[LX_F2]


def _z_goods_1(s, d, t, p, c):
    return (c.P1 - d[K_F1] - p.delta_K * c.k1
            - c.ca1 - c.cb1 - c.gg1 - d[S_F1] - c.a12)


def _z_goods_2(s, d, t, p, c):
    return (c.P2 - d[K_F2] - p.delta_K * c.k2
            - c.ca2 - c.cb2 - c.gg2 - d[S_F2] - c.a21)


def build_model(params: MacroParams) -> ModelDefinition:
    """Assemble the model: 25 state variables, 3 auxiliary rate channels,
    7 Lagrangian constraints and every behavioral force.

    With ``params.conspicuous`` the consumption forces gain the mutual
    social-influence terms; setting both social power factors to zero
    makes the extended model's dynamics coincide with the base model's.
    """
    bad = validate_params(params)
    if bad:
        raise ValueError("invalid parameters: " + "; ".join(bad))
    p = params
    variables = tuple(VariableId(i, n) for i, n in enumerate(EXT_NAMES))
    v = variables

    forces = [
        ForceTerm("household_a", v[L_A1], p.mu_aL1, _f_labor_a),
        ForceTerm("household_a", v[L_A2], p.mu_aL2, _f_labor_a),
        ForceTerm("household_b", v[L_B1], p.mu_bL1, _f_labor_b),
        ForceTerm("household_b", v[L_B2], p.mu_bL2, _f_labor_b),
        ForceTerm("household_a", v[C_A1], p.mu_aC1, _f_cons_a1),
        ForceTerm("household_a", v[C_A2], p.mu_aC2, _f_cons_a2),
        ForceTerm("household_b", v[C_B1], p.mu_bC1, _f_cons_b1),
        ForceTerm("household_b", v[C_B2], p.mu_bC2, _f_cons_b2),
        ForceTerm("household_a", v[G_G1], p.mu_aG1, _f_gov_g1),
        ForceTerm("household_b", v[G_G2], p.mu_bG2, _f_gov_g2),
        ForceTerm("household_a", v[M_A], p.mu_aM, _f_saving_a),
        ForceTerm("household_b", v[M_B], p.mu_bM, _f_saving_b),
        ForceTerm("government", v[DX_G], p.mu_gD, _f_gov_debt),
        ForceTerm("firm_f1", v[K_F1], p.mu_fK1, _f_capital_1),
        ForceTerm("firm_f2", v[K_F2], p.mu_fK2, _f_capital_2),
        ForceTerm("firm_f1", v[LX_F1], p.mu_fL1, _f_labor_f1),
        ForceTerm("firm_f2", v[LX_F2], p.mu_fL2, _f_labor_f2),
        ForceTerm("firm_f1", v[A_21], p.mu_fA1, _f_interm_1),
        ForceTerm("firm_f2", v[A_12], p.mu_fA2, _f_interm_2),
        ForceTerm("firm_f1", v[S_F1], p.mu_fS1, _f_inventory_1),
        ForceTerm("firm_f2", v[S_F2], p.mu_fS2, _f_inventory_2),
        ForceTerm("firm_f1", v[D_F1], 1.0, _f_credit_1),
        ForceTerm("firm_f2", v[D_F2], 1.0, _f_credit_2),
        ForceTerm("central_bank", v[R_G], p.mu_r, _f_rate_target),
    ]
    if p.conspicuous:
        forces += [
            ForceTerm("household_b", v[C_A1], p.mu_baC, _f_social_a1),
            ForceTerm("household_b", v[C_A2], p.mu_baC, _f_social_a2),
            ForceTerm("household_a", v[C_B1], p.mu_abC, _f_social_b1),
            ForceTerm("household_a", v[C_B2], p.mu_abC, _f_social_b2),
        ]

    constraints = (
        ConstraintDef(
            "budget_a", _z_budget_a,
            {L_A1: _c_net_wage_1, L_A2: _c_net_wage_2,
             C_A1: _c_p1, C_A2: _c_p2, M_A: _c_one},
            frozenset({M_A}),
        ),
        ConstraintDef(
            "budget_b", _z_budget_b,
            {L_B1: _c_net_wage_1, L_B2: _c_net_wage_2,
             C_B1: _c_p1, C_B2: _c_p2, M_B: _c_one},
            frozenset({M_B}),
        ),
        ConstraintDef(
            "budget_g", _z_budget_g,
            {G_G1: _c_p1, G_G2: _c_p2, DX_G: _c_minus_one},
            frozenset({DX_G}),
        ),
        ConstraintDef(
            "labor_1", _z_labor_1,
            {L_A1: _c_one, L_B1: _c_one, LX_F1: _c_minus_one, W_1: _c_mu_w},
            frozenset({L_A1, L_B1, LX_F1}),
        ),
        ConstraintDef(
            "labor_2", _z_labor_2,
            {L_A2: _c_one, L_B2: _c_one, LX_F2: _c_minus_one, W_2: _c_mu_w},
            frozenset({L_A2, L_B2, LX_F2}),
        ),
        ConstraintDef(
            "goods_1", _z_goods_1,
            {C_A1: _c_minus_one, C_B1: _c_minus_one, G_G1: _c_minus_one,
             A_12: _c_minus_one, S_F1: _c_buffer_1,
             K_F1: _c_mpK1, LX_F1: _c_mpL1, A_21: _c_mpA1,
             P_1: _c_mu_p1, D_F1: _c_credit_1, R_G: _c_rate_p1},
            frozenset({K_F1, S_F1}),
        ),
        ConstraintDef(
            "goods_2", _z_goods_2,
            {C_A2: _c_minus_one, C_B2: _c_minus_one, G_G2: _c_minus_one,
             A_21: _c_minus_one, S_F2: _c_buffer_2,
             K_F2: _c_mpK2, LX_F2: _c_mpL2, A_12: _c_mpA2,
             P_2: _c_mu_p2, D_F2: _c_credit_2, R_G: _c_rate_p2},
            frozenset({K_F2, S_F2}),
        ),
    )

    return ModelDefinition(
        variables=variables,
        forces=tuple(forces),
        constraints=constraints,
        dependents=lambda s, t, prm: _make_context(s, t, prm),
        state_dim=N_STATE,
    )


@dataclass(frozen=True)
class UtilityRecord:
    """Utility levels and the marginal-benefit-per-price diagnostics.

    The household ratios are marginal utility of each good over its price
    and marginal disutility of labor over the after-tax wage; the firm
    ratios are the marginal value product of each input over its cost
    (unity at the stationary state).
    """

    U_a: float
    U_b: float
    U_g: float
    U_f1: float
    U_f2: float
    a_leisure_w1: float
    a_leisure_w2: float
    a_cons_1: float
    a_cons_2: float
    b_leisure_w1: float
    b_leisure_w2: float
    b_cons_1: float
    b_cons_2: float
    f1_capital: float
    f1_labor: float
    f1_intermediate: float
    f2_capital: float
    f2_labor: float
    f2_intermediate: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def utilities(
    state: MacroState | Sequence[float],
    params: MacroParams,
    sdot_f1: float = 0.0,
    sdot_f2: float = 0.0,
) -> UtilityRecord:
    """Utility levels and marginal ratios at a feasible state.

    Expected firm profit treats the inventory drift as given
    (``sdot_f1``/``sdot_f2``, zero by default); the input gradients do
    not depend on it.
    """
    vec = state.to_vector() if isinstance(state, MacroState) else np.asarray(state)
    p = params
    c = _make_context(vec, 0.0, p)
    u_a = (c.ca1 ** p.alpha_C1 * c.ca2 ** p.alpha_C2
           + c.leisure_a ** p.alpha_L + c.gg1 ** p.alpha_G1)
    u_b = (c.cb1 ** p.beta_C1 * c.cb2 ** p.beta_C2
           + c.leisure_b ** p.beta_L + c.gg2 ** p.beta_G2)
    u_g = 0.0
    if c.dg > 0.0:
        pbar = 0.5 * (c.p1 + c.p2)
        u_g = -(p.gamma_D + p.gamma_r * c.rg) * (c.dg / pbar) ** 2
    u_f1 = (c.p1 * c.P1 - c.p1 * p.delta_K * c.k1 - c.p2 * c.a21 - c.w1 * c.lf1
            - c.r_f1 * c.p1 * (c.k1 + p.s_top_f1 * (c.P1 - sdot_f1)))
    u_f2 = (c.p2 * c.P2 - c.p2 * p.delta_K * c.k2 - c.p1 * c.a12 - c.w2 * c.lf2
            - c.r_f2 * c.p2 * (c.k2 + p.s_top_f2 * (c.P2 - sdot_f2)))
    net1 = (1.0 - p.theta) * c.w1
    net2 = (1.0 - p.theta) * c.w2
    one_rs1 = 1.0 - c.r_f1 * p.s_top_f1
    one_rs2 = 1.0 - c.r_f2 * p.s_top_f2
    return UtilityRecord(
        U_a=u_a, U_b=u_b, U_g=u_g, U_f1=u_f1, U_f2=u_f2,
        a_leisure_w1=c.mlu_a / net1,
        a_leisure_w2=c.mlu_a / net2,
        a_cons_1=c.du_a_c1 / c.p1,
        a_cons_2=c.du_a_c2 / c.p2,
        b_leisure_w1=c.mlu_b / net1,
        b_leisure_w2=c.mlu_b / net2,
        b_cons_1=c.du_b_c1 / c.p1,
        b_cons_2=c.du_b_c2 / c.p2,
        f1_capital=one_rs1 * c.mpK1 / (c.r_f1 + p.delta_K),
        f1_labor=c.p1 * one_rs1 * c.mpL1 / c.w1,
        f1_intermediate=c.p1 * one_rs1 * c.mpA1 / c.p2,
        f2_capital=one_rs2 * c.mpK2 / (c.r_f2 + p.delta_K),
        f2_labor=c.p2 * one_rs2 * c.mpL2 / c.w2,
        f2_intermediate=c.p2 * one_rs2 * c.mpA2 / c.p1,
    )


def validate_state(state: MacroState | Sequence[float], params: MacroParams) -> list[str]:
    """Violation messages for the user-supplied part of the restrictions.

    The dependent construction makes the balance-sheet, tax, profit and
    lockstep identities automatic; what remains is positivity of
    quantities and prices, the leisure bounds, and finiteness.
    """
    vec = state.to_vector() if isinstance(state, MacroState) else np.asarray(state, dtype=float)
    bad: list[str] = []
    if vec.shape != (N_STATE,):
        return [f"state must have {N_STATE} components, got {vec.shape}"]
    for i, name in enumerate(STATE_NAMES):
        if not math.isfinite(vec[i]):
            bad.append(f"{name} is not finite")
    if bad:
        return bad
    for i in _POSITIVE_STATE:
        if vec[i] <= 0.0:
            bad.append(f"{STATE_NAMES[i]} = {vec[i]} must be > 0")
    for which, (i, j) in (("a", (L_A1, L_A2)), ("b", (L_B1, L_B2))):
        if vec[i] + vec[j] >= 1.0:
            bad.append(
                f"leisure of household {which} = {1.0 - vec[i] - vec[j]} must be > 0"
            )
    return bad


def zero_directions() -> tuple[np.ndarray, np.ndarray]:
    """The two state-space directions along which the stationary state is
    neutral: the labor-swap between the household sectors and the
    credit/equity financing swap between the firms."""
    v1 = np.zeros(N_STATE)
    v1[L_A1] = 1.0
    v1[L_A2] = -1.0
    v1[L_B1] = -1.0
    v1[L_B2] = 1.0
    v2 = np.zeros(N_STATE)
    v2[D_F1] = 1.0
    v2[D_F2] = -1.0
    return v1, v2


def scale_powers(
    params: MacroParams,
    price_scale: float,
    quantity_scale: float,
    include_rate_speed: bool = True,
) -> MacroParams:
    """Rescale every quantity power factor and every price adaptation
    speed by common factors; the policy-rate speed counts as a price
    speed unless ``include_rate_speed`` is false."""
    changes = {f: getattr(params, f) * quantity_scale for f in QUANTITY_POWER_FIELDS}
    price_fields = PRICE_POWER_FIELDS + (("mu_r",) if include_rate_speed else ())
    changes.update({f: getattr(params, f) * price_scale for f in price_fields})
    return params.replace(**changes)
