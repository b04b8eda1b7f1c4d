"""Generic assembly and solution of a constrained-dynamics system.

A model is a set of time-dependent variables driven by power-weighted
behavioral forces plus constraint forces.  Ex ante (all multipliers zero)
each variable moves according to

    xdot_i = sum_j  mu_ji * f_ji(x, t)

and the ex-post dynamics add one constraint force ``lambda_k * c_ki`` per
constraint ``k`` so that every constraint residual ``Z_k(x, xdot) = 0``
holds exactly.  Because each residual is affine in the rates it references,
substituting the multiplier-affine rate vector into the constraints yields
a dense K-by-K linear system for the multipliers, solved by LU with
partial pivoting and gated on a condition estimate.

Models may declare *auxiliary rate channels*: trailing slots of the rate
vector whose levels are algebraic functions of the state (supplied by the
model's ``dependents`` hook) but whose rates carry forces and appear in
constraints.  Only the leading ``state_dim`` slots are integrated state.

All operations are pure functions of their inputs; a ``ModelDefinition``
is immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy.linalg import get_lapack_funcs

__all__ = [
    "VariableId",
    "ForceTerm",
    "ConstraintDef",
    "ModelDefinition",
    "MultiplierSolution",
    "GcdError",
    "InfeasibleStateError",
    "ConstraintDegeneracyError",
    "AffinityError",
    "ex_ante_derivative",
    "assemble_multiplier_system",
    "solve_multipliers",
    "ex_post_derivative",
    "verify_affinity",
]

# Callbacks receive (state, t, params, ctx) where ctx is whatever the
# model's dependents hook returned for this (state, t, params).
ForceFn = Callable[[Sequence[float], float, Any, Any], float]
ResidualFn = Callable[[Sequence[float], Sequence[float], float, Any, Any], float]


class GcdError(Exception):
    """Base error for constrained-dynamics evaluation."""


class InfeasibleStateError(GcdError):
    """State outside the feasible region (non-positive quantity, non-finite force)."""


class ConstraintDegeneracyError(GcdError):
    """Multiplier system singular or ill-conditioned."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class AffinityError(GcdError):
    """Constraint residuals are not affine in the multipliers."""


@dataclass(frozen=True)
class VariableId:
    """Ordinal slot in the rate vector plus a human-readable label."""

    index: int
    name: str


@dataclass(frozen=True)
class ForceTerm:
    """One agent's power-weighted push on one variable."""

    agent: str
    variable: VariableId
    power: float
    force: ForceFn


@dataclass(frozen=True)
class ConstraintDef:
    """A closure constraint enforced through a Lagrangian multiplier.

    ``residual`` evaluates Z_k given the state and the full rate vector.
    ``coefficients`` maps variable index -> c_ki, the constraint-force
    coefficient on that variable's rate (the force added is
    ``lambda_k * c_ki``).  ``affects_derivative`` lists the variable
    indices whose rates appear inside the residual.
    """

    name: str
    residual: ResidualFn
    coefficients: Mapping[int, ForceFn]
    affects_derivative: frozenset[int] = frozenset()


@dataclass(frozen=True)
class ModelDefinition:
    """Variables, forces and Lagrangian constraints of one model.

    ``variables`` covers the integrated state (first ``state_dim``
    entries) followed by any auxiliary rate channels.  ``dependents``
    maps (state, t, params) to an opaque context object handed to every
    force, coefficient and residual callback; ``feasibility`` may return
    a violation message for states that must be rejected before any
    force is evaluated.
    """

    variables: tuple[VariableId, ...]
    forces: tuple[ForceTerm, ...]
    constraints: tuple[ConstraintDef, ...]
    dependents: Callable[[Sequence[float], float, Any], Any] = lambda s, t, p: None
    feasibility: Callable[[Sequence[float], float, Any], str | None] = (
        lambda s, t, p: None
    )
    state_dim: int = -1  # -1: every variable is integrated state

    def __post_init__(self):
        n = len(self.variables)
        if self.state_dim < 0:
            object.__setattr__(self, "state_dim", n)
        if not (0 < self.state_dim <= n):
            raise ValueError(f"state_dim {self.state_dim} out of range for {n} variables")
        for i, v in enumerate(self.variables):
            if v.index != i:
                raise ValueError(f"variable {v.name!r} has index {v.index}, expected {i}")
        if len(self.constraints) > n:
            raise ValueError("more Lagrangian constraints than variables")

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)


@dataclass(frozen=True)
class MultiplierSolution:
    """Multipliers ordered as the model's constraints."""

    lambdas: np.ndarray

    def __len__(self) -> int:
        return len(self.lambdas)


def _context(model: ModelDefinition, state, time: float, params) -> Any:
    msg = model.feasibility(state, time, params)
    if msg is not None:
        raise InfeasibleStateError(msg)
    return model.dependents(state, time, params)


def ex_ante_derivative(
    model: ModelDefinition, state, time: float, params, ctx: Any = None
) -> list[float]:
    """Planned rate of every variable: the power-weighted force sum, no
    constraint forces.

    Returns a plain float list over all variable slots (state first, then
    auxiliary channels).  Raises ``InfeasibleStateError`` if the state is
    rejected or any force evaluates non-finite.
    """
    if ctx is None:
        ctx = _context(model, state, time, params)
    rates = [0.0] * model.n_vars
    for term in model.forces:
        if term.power == 0.0:
            continue
        value = term.power * term.force(state, time, params, ctx)
        if not math.isfinite(value):
            raise InfeasibleStateError(
                f"force of {term.agent!r} on {term.variable.name!r} is not finite"
            )
        rates[term.variable.index] += value
    return rates


def _coefficient_columns(
    model: ModelDefinition, state, time: float, params, ctx
) -> list[list[tuple[int, float]]]:
    """Sparse constraint-force columns: one (index, c_ki) list per constraint."""
    cols = []
    for con in model.constraints:
        col = []
        for idx, fn in con.coefficients.items():
            c = fn(state, time, params, ctx)
            if not math.isfinite(c):
                raise InfeasibleStateError(
                    f"constraint {con.name!r} coefficient on "
                    f"{model.variables[idx].name!r} is not finite"
                )
            col.append((idx, c))
        cols.append(col)
    return cols


def _residuals(model, state, rates, time, params, ctx) -> list[float]:
    return [con.residual(state, rates, time, params, ctx) for con in model.constraints]


def assemble_multiplier_system(
    model: ModelDefinition, state, time: float, params, ctx: Any = None
) -> tuple[np.ndarray, np.ndarray]:
    """Linear system A @ lam = b whose solution zeroes every constraint.

    Built by probing: the residuals are evaluated at the ex-ante rates
    (lam = 0) and at one unit multiplier per constraint; affinity of the
    residuals in the rates makes the difference quotient exact.
    """
    if ctx is None:
        ctx = _context(model, state, time, params)
    k = model.n_constraints
    ante = ex_ante_derivative(model, state, time, params, ctx)
    base = _residuals(model, state, ante, time, params, ctx)
    a = np.empty((k, k))
    for m, col in enumerate(_coefficient_columns(model, state, time, params, ctx)):
        probe = list(ante)
        for idx, c in col:
            probe[idx] += c
        shifted = _residuals(model, state, probe, time, params, ctx)
        for i in range(k):
            a[i, m] = shifted[i] - base[i]
    b = -np.asarray(base)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InfeasibleStateError("constraint residuals are not finite")
    return a, b


def solve_multipliers(
    a: np.ndarray, b: np.ndarray, cond_limit: float = 1e12
) -> MultiplierSolution:
    """Dense LU solve of the multiplier system, gated on a condition estimate.

    Raises ``ConstraintDegeneracyError`` when the system is singular or its
    1-norm condition estimate exceeds ``cond_limit``.
    """
    a = np.ascontiguousarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    k = a.shape[0]
    if k == 0:
        return MultiplierSolution(np.empty(0))
    getrf, gecon, getrs = get_lapack_funcs(("getrf", "gecon", "getrs"), (a,))
    anorm = abs(a).sum(axis=1).max()  # LAPACK wants the infinity norm here
    lu, piv, info = getrf(a)
    if info != 0:
        raise ConstraintDegeneracyError("singular multiplier system", math.inf)
    rcond, _ = gecon(lu, anorm, norm="I")
    cond = math.inf if rcond == 0.0 else 1.0 / rcond
    if cond > cond_limit:
        raise ConstraintDegeneracyError("ill-conditioned multiplier system", cond)
    lam, info = getrs(lu, piv, b)
    if info != 0:  # pragma: no cover - getrs only fails on bad arguments
        raise ConstraintDegeneracyError("multiplier solve failed", cond)
    # one refinement step keeps the backward residual at roundoff level
    resid = b - a @ lam
    tol = 1e-12 * (1.0 + abs(b).max(initial=0.0))
    if abs(resid).max(initial=0.0) > tol:
        corr, info = getrs(lu, piv, resid)
        if info == 0:
            lam = lam + corr
        if abs(b - a @ lam).max(initial=0.0) > tol:
            raise ConstraintDegeneracyError("multiplier solve lost accuracy", cond)
    return MultiplierSolution(lam)


def ex_post_derivative(
    model: ModelDefinition,
    state,
    time: float,
    params,
    cond_limit: float = 1e12,
) -> tuple[np.ndarray, MultiplierSolution]:
    """Realized rate vector: ex-ante forces plus solved constraint forces.

    The returned rates satisfy every constraint residual to solver
    accuracy; the multipliers are returned alongside (their signs are the
    mismatch diagnostics: a positive goods multiplier means ex-ante excess
    demand for that good).
    """
    ctx = _context(model, state, time, params)
    ante = ex_ante_derivative(model, state, time, params, ctx)
    rates = np.asarray(ante)
    if model.n_constraints == 0:
        return rates, MultiplierSolution(np.empty(0))
    a, b = assemble_multiplier_system(model, state, time, params, ctx)
    sol = solve_multipliers(a, b, cond_limit)
    lam = sol.lambdas
    for m, col in enumerate(_coefficient_columns(model, state, time, params, ctx)):
        lm = lam[m]
        if lm != 0.0:
            for idx, c in col:
                rates[idx] += lm * c
    return rates, sol


def verify_affinity(
    model: ModelDefinition,
    state,
    time: float,
    params,
    rel_tol: float = 1e-9,
    seed: int = 7,
) -> bool:
    """Check that every constraint residual is affine in the multipliers.

    Evaluates the residuals at unit probes, doubled probes and one random
    multiplier vector and tests collinearity against the affine prediction.
    """
    ctx = _context(model, state, time, params)
    k = model.n_constraints
    if k == 0:
        return True
    ante = ex_ante_derivative(model, state, time, params, ctx)
    cols = _coefficient_columns(model, state, time, params, ctx)
    base = np.asarray(_residuals(model, state, ante, time, params, ctx))

    def residuals_at(lam: np.ndarray) -> np.ndarray:
        probe = list(ante)
        for m, col in enumerate(cols):
            lm = lam[m]
            if lm != 0.0:
                for idx, c in col:
                    probe[idx] += lm * c
        return np.asarray(_residuals(model, state, probe, time, params, ctx))

    slopes = np.empty((k, k))
    for m in range(k):
        unit = np.zeros(k)
        unit[m] = 1.0
        slopes[:, m] = residuals_at(unit) - base
        doubled = residuals_at(2.0 * unit) - base
        scale = np.maximum(np.abs(doubled), np.abs(2.0 * slopes[:, m])) + 1e-300
        if np.any(np.abs(doubled - 2.0 * slopes[:, m]) > rel_tol * np.maximum(scale, 1.0)):
            return False
    lam = np.random.default_rng(seed).standard_normal(k)
    predicted = base + slopes @ lam
    actual = residuals_at(lam)
    scale = np.maximum(np.abs(predicted), np.abs(actual))
    return bool(np.all(np.abs(actual - predicted) <= rel_tol * np.maximum(scale, 1.0)))
