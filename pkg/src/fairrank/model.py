"""Two-parameter logistic (2PL) latent-trait model for sparse matrices.

Success probability for system j on item i:

    P_ji = sigma(a_i * (theta_j - b_i)),   sigma(x) = 1 / (1 + exp(-x))

with ability theta_j, item difficulty b_i, and item discrimination a_i > 0.
Estimation maximizes the log-likelihood over observed cells plus Gaussian
log-prior penalties on theta, b, and log a; the priors pin down the scale
that the data term (which depends only on theta_j - b_i) leaves free.
Discriminations are optimized as log a, so a > 0 needs no bound constraints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from . import stats
from .matrix import ResponseMatrix, diagnose_mask

# Probabilities are clamped this far from {0, 1} inside log terms so the
# objective stays finite under extreme parameters during line search.
PROB_CLAMP = 1e-12


class ModelError(ValueError):
    """Invalid model inputs (dimensions, parameter domains)."""


class FitError(RuntimeError):
    """Numerical failure while fitting."""


class NonIdentifiedError(FitError):
    """The observed-information matrix is singular or not positive definite."""


@dataclass(frozen=True)
class ItemParameterSet:
    """Per-item difficulty b (logit scale) and discrimination a > 0."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        if self.a.shape != self.b.shape or self.a.ndim != 1:
            raise ModelError("a and b must be 1-d arrays of equal length")
        if np.any(self.a <= 0):
            raise ModelError("discriminations must be positive")

    def __len__(self) -> int:
        return self.a.size

    @property
    def log_a(self) -> np.ndarray:
        return np.log(self.a)


@dataclass(frozen=True)
class AbilityVector:
    """Per-system ability estimates, with standard errors once computed."""

    theta: np.ndarray
    se_theta: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        if self.se_theta is not None:
            object.__setattr__(
                self, "se_theta", np.asarray(self.se_theta, dtype=float)
            )
            if self.se_theta.shape != self.theta.shape:
                raise ModelError("se_theta length must match theta")

    def __len__(self) -> int:
        return self.theta.size


@dataclass(frozen=True)
class PriorConfig:
    """Gaussian prior standard deviations; inf disables a penalty."""

    theta_std: float = 1.0
    b_std: float = math.sqrt(2.0)
    log_a_std: float = 0.5

    def __post_init__(self):
        for name in ("theta_std", "b_std", "log_a_std"):
            if not getattr(self, name) > 0:
                raise ModelError(f"{name} must be > 0")

    def precisions(self) -> tuple[float, float, float]:
        return tuple(
            0.0 if math.isinf(s) else 1.0 / (s * s)
            for s in (self.theta_std, self.b_std, self.log_a_std)
        )


@dataclass(frozen=True)
class FitSettings:
    """Convergence: max |gradient component| <= gradient_tol, within
    max_iterations quasi-Newton iterations."""

    gradient_tol: float = 1e-6
    max_iterations: int = 500


@dataclass(frozen=True)
class Fit2PL:
    """Result of a 2PL fit: estimates plus convergence metadata."""

    abilities: AbilityVector
    items: ItemParameterSet
    objective: float
    converged: bool
    iterations: int
    gradient_norm: float


class _CellData(NamedTuple):
    jj: np.ndarray
    ii: np.ndarray
    ss: np.ndarray
    tt: np.ndarray
    n_systems: int
    n_items: int


def predict_prob(theta: float, a: float, b: float) -> float:
    """2PL success probability sigma(a * (theta - b)), overflow-safe."""
    if a <= 0:
        raise ModelError("discrimination a must be positive")
    return float(expit(a * (theta - b)))


def _as_theta(abilities) -> np.ndarray:
    theta = getattr(abilities, "theta", abilities)
    return np.asarray(theta, dtype=float)


def _cell_data(matrix: ResponseMatrix) -> _CellData:
    jj, ii, ss, tt = matrix.observed_arrays()
    return _CellData(jj, ii, ss, tt, matrix.n_systems, matrix.n_items)


def _check_dims(data: _CellData, theta: np.ndarray, items: ItemParameterSet):
    if theta.size != data.n_systems:
        raise ModelError(
            f"got {theta.size} abilities for {data.n_systems} systems"
        )
    if len(items) != data.n_items:
        raise ModelError(
            f"got {len(items)} item parameter pairs for {data.n_items} items"
        )


def _value_and_grad(
    x: np.ndarray, data: _CellData, precisions: tuple[float, float, float]
) -> tuple[float, np.ndarray]:
    """Penalized log-likelihood and its gradient at the packed point
    x = (theta_1..J, b_1..I, log_a_1..I).  Fixed summation order keeps the
    reported objective reproducible."""
    j_n, i_n = data.n_systems, data.n_items
    theta = x[:j_n]
    b = x[j_n : j_n + i_n]
    log_a = x[j_n + i_n :]
    a = np.exp(log_a)
    p_theta, p_b, p_log_a = precisions

    eta = a[data.ii] * (theta[data.jj] - b[data.ii])
    p = expit(eta)
    p_safe = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    ll = float(data.ss @ np.log(p_safe) + (data.tt - data.ss) @ np.log(1.0 - p_safe))
    ll -= 0.5 * (
        p_theta * float(theta @ theta)
        + p_b * float(b @ b)
        + p_log_a * float(log_a @ log_a)
    )

    resid = data.ss - data.tt * p
    a_resid = a[data.ii] * resid
    g_theta = np.bincount(data.jj, weights=a_resid, minlength=j_n) - p_theta * theta
    g_b = -np.bincount(data.ii, weights=a_resid, minlength=i_n) - p_b * b
    g_log_a = (
        np.bincount(data.ii, weights=eta * resid, minlength=i_n) - p_log_a * log_a
    )
    return ll, np.concatenate([g_theta, g_b, g_log_a])


def log_likelihood(
    matrix: ResponseMatrix,
    abilities,
    items: ItemParameterSet,
    priors: PriorConfig = PriorConfig(),
) -> float:
    """Regularized log-likelihood over observed cells.

    Data term: sum over cells of s*log P + (t-s)*log(1-P).  Prior terms:
    -theta^2/(2 s_theta^2) - b^2/(2 s_b^2) - (log a)^2/(2 s_log_a^2) per
    parameter, normalization constants dropped throughout.
    """
    data = _cell_data(matrix)
    theta = _as_theta(abilities)
    _check_dims(data, theta, items)
    x = np.concatenate([theta, items.b, items.log_a])
    value, _ = _value_and_grad(x, data, priors.precisions())
    return value


def gradient(
    matrix: ResponseMatrix,
    abilities,
    items: ItemParameterSet,
    priors: PriorConfig = PriorConfig(),
) -> np.ndarray:
    """Analytic gradient of log_likelihood over (theta, b, log a).

    d/dtheta_j = sum_i a_i (s_ji - t_ji P_ji) - theta_j / s_theta^2
    d/db_i     = -sum_j a_i (s_ji - t_ji P_ji) - b_i / s_b^2
    d/dlog a_i = sum_j a_i (theta_j - b_i)(s_ji - t_ji P_ji) - log a_i / s_la^2
    """
    data = _cell_data(matrix)
    theta = _as_theta(abilities)
    _check_dims(data, theta, items)
    x = np.concatenate([theta, items.b, items.log_a])
    _, grad = _value_and_grad(x, data, priors.precisions())
    return grad


def _fd_hessian(grad_fn, x0: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Symmetrized central-difference Hessian of a function whose analytic
    gradient is grad_fn."""
    n = x0.size
    hessian = np.empty((n, n))
    for k in range(n):
        h = step * max(1.0, abs(x0[k]))
        x_plus = x0.copy()
        x_plus[k] += h
        x_minus = x0.copy()
        x_minus[k] -= h
        hessian[:, k] = (grad_fn(x_plus) - grad_fn(x_minus)) / (2.0 * h)
    return 0.5 * (hessian + hessian.T)


def _pooled_logit(success: np.ndarray, trials: np.ndarray) -> np.ndarray:
    rate = np.clip(success / trials, 0.02, 0.98)
    return np.log(rate / (1.0 - rate))


def _initial_point(data: _CellData) -> np.ndarray:
    """Logit moment-matching warm start; avoids the all-zeros saddle."""
    sys_s = np.bincount(data.jj, weights=data.ss, minlength=data.n_systems)
    sys_t = np.bincount(data.jj, weights=data.tt, minlength=data.n_systems)
    item_s = np.bincount(data.ii, weights=data.ss, minlength=data.n_items)
    item_t = np.bincount(data.ii, weights=data.tt, minlength=data.n_items)
    theta0 = _pooled_logit(sys_s, sys_t)
    spread = theta0.std()
    if spread > 1e-12:
        theta0 = (theta0 - theta0.mean()) / spread
    else:
        theta0 = np.zeros_like(theta0)
    b0 = -_pooled_logit(item_s, item_t)
    return np.concatenate([theta0, b0, np.zeros(data.n_items)])


def fit(
    matrix: ResponseMatrix,
    priors: PriorConfig = PriorConfig(),
    settings: FitSettings = FitSettings(),
) -> Fit2PL:
    """Maximize the regularized log-likelihood with L-BFGS-B.

    Preconditions (raised as FitError naming the violated constraint):
    every system observed on >= 2 items, every item observed for >= 3
    systems, and a connected system-item observation graph.
    """
    diag = diagnose_mask(matrix)
    if diag.min_items_per_system < 2:
        raise FitError(
            "unfit matrix: min_items_per_system = "
            f"{diag.min_items_per_system} < 2"
        )
    if diag.min_systems_per_item < 3:
        raise FitError(
            "unfit matrix: min_systems_per_item = "
            f"{diag.min_systems_per_item} < 3"
        )
    if not diag.bipartite_connected:
        raise FitError("unfit matrix: observation graph is not connected")

    data = _cell_data(matrix)
    precisions = priors.precisions()

    def negated(x: np.ndarray) -> tuple[float, np.ndarray]:
        value, grad = _value_and_grad(x, data, precisions)
        if not np.isfinite(value):
            raise FitError("objective became non-finite during optimization")
        return -value, -grad

    x = _initial_point(data)
    value, grad = _value_and_grad(x, data, precisions)
    gradient_norm = float(np.abs(grad).max())
    iterations = 0
    # A continuation run restarts L-BFGS memory from the current point when
    # the line search stalls short of the gradient tolerance.
    for _ in range(6):
        budget = settings.max_iterations - iterations
        if budget <= 0 or gradient_norm <= settings.gradient_tol:
            break
        result = minimize(
            negated,
            x,
            jac=True,
            method="L-BFGS-B",
            options={
                "maxiter": budget,
                "gtol": settings.gradient_tol,
                "ftol": 0.0,
                "maxls": 60,
            },
        )
        x = result.x
        iterations += max(int(result.nit), 1)
        value, grad = _value_and_grad(x, data, precisions)
        gradient_norm = float(np.abs(grad).max())

    # Near the optimum the objective change per step falls below double
    # precision and the line search stalls while the analytic gradient is
    # still above tolerance; a Newton step on the gradient finishes the job.
    for _ in range(3):
        if gradient_norm <= settings.gradient_tol or iterations >= settings.max_iterations:
            break
        hessian = _fd_hessian(
            lambda p: -_value_and_grad(p, data, precisions)[1], x
        )
        try:
            delta = np.linalg.solve(hessian, grad)
        except np.linalg.LinAlgError:
            break
        candidate = x + delta
        cand_value, cand_grad = _value_and_grad(candidate, data, precisions)
        cand_norm = float(np.abs(cand_grad).max())
        if not np.isfinite(cand_norm) or cand_norm >= gradient_norm:
            break
        x, value, grad, gradient_norm = candidate, cand_value, cand_grad, cand_norm
        iterations += 1

    j_n, i_n = data.n_systems, data.n_items
    return Fit2PL(
        abilities=AbilityVector(theta=x[:j_n]),
        items=ItemParameterSet(a=np.exp(x[j_n + i_n :]), b=x[j_n : j_n + i_n]),
        objective=value,
        converged=gradient_norm <= settings.gradient_tol,
        iterations=iterations,
        gradient_norm=gradient_norm,
    )


def standard_errors(
    matrix: ResponseMatrix,
    fitted: Fit2PL,
    priors: PriorConfig = PriorConfig(),
    step: float = 1e-5,
) -> AbilityVector:
    """Ability standard errors from the observed information at the fit.

    The Hessian of the negated objective is built by central finite
    differences of the analytic gradient; the ability block is inverted and
    the sqrt of its diagonal reported.  Inverting the ability block treats
    the item parameters as calibrated, which is what makes the errors
    shrink with the amount of data (doubling trials divides them by about
    sqrt(2)); the joint inverse instead reflects the scale indeterminacy
    the priors resolve and barely responds to data volume.
    """
    if not fitted.converged:
        raise FitError("standard errors require a converged fit")
    data = _cell_data(matrix)
    precisions = priors.precisions()
    x0 = np.concatenate(
        [fitted.abilities.theta, fitted.items.b, fitted.items.log_a]
    )

    def neg_grad(x: np.ndarray) -> np.ndarray:
        _, grad = _value_and_grad(x, data, precisions)
        return -grad

    hessian = _fd_hessian(neg_grad, x0, step)
    theta_block = hessian[: data.n_systems, : data.n_systems]
    try:
        inverse = np.linalg.inv(theta_block)
    except np.linalg.LinAlgError as exc:
        raise NonIdentifiedError(
            "observed information is singular; fit is not identified"
        ) from exc
    var_theta = np.diag(inverse)
    if np.any(var_theta <= 0):
        raise NonIdentifiedError(
            "non-positive ability variance; not at a regular maximum"
        )
    return AbilityVector(
        theta=fitted.abilities.theta, se_theta=np.sqrt(var_theta)
    )


def rank_by_ability(fitted: Fit2PL) -> stats.Ranking:
    """Systems ranked by descending estimated ability, average-rank ties."""
    return stats.rank_descending(fitted.abilities.theta)


def fit_to_dict(
    fitted: Fit2PL,
    system_labels: tuple[str, ...],
    item_labels: tuple[str, ...],
) -> dict:
    """JSON-ready view of a fit: systems, items, convergence metadata."""
    se = fitted.abilities.se_theta
    return {
        "systems": [
            {
                "label": label,
                "theta": float(theta),
                "se": float(se[j]) if se is not None else None,
            }
            for j, (label, theta) in enumerate(
                zip(system_labels, fitted.abilities.theta)
            )
        ],
        "items": [
            {"label": label, "a": float(a), "b": float(b)}
            for label, a, b in zip(item_labels, fitted.items.a, fitted.items.b)
        ],
        "objective": float(fitted.objective),
        "converged": bool(fitted.converged),
        "iterations": int(fitted.iterations),
    }
