"""
GP Core Service.

Kernel evaluation, exact GP regression with cached Cholesky factorization, and the
analytic gradients of the posterior mean and variance. Shared by the scan GP and the
clustered GPIS.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from backend.models.kernels import Kernel, Matern32Kernel
from backend.utils.exceptions import DomainError, SingularCovarianceError

logger = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
GRADIENT_CHUNK = 512


@dataclass(frozen=True)
class GpModel:
    """
    Fitted GP: training data plus the factorization of (K + K_x).

    Attributes:
        inputs (np.ndarray): (n, dim) training inputs
        targets (np.ndarray): (n,) training targets y
        noises (np.ndarray): (n,) per-point noise variances (diagonal of K_x)
        kernel (Kernel): Covariance function
        prior_mean (float): Constant prior mean
        factor (tuple, optional): Lower Cholesky factor as returned by cho_factor
        alpha (np.ndarray): (K + K_x)^-1 (y - prior_mean)
        jitter (float): Diagonal jitter that made the factorization succeed
    """

    inputs: np.ndarray
    targets: np.ndarray
    noises: np.ndarray
    kernel: Kernel
    prior_mean: float = 0.0
    factor: Optional[Tuple[np.ndarray, bool]] = field(default=None, repr=False)
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    jitter: float = 0.0

    @property
    def size(self) -> int:
        return int(self.targets.shape[0])

    @property
    def dim(self) -> int:
        return int(self.inputs.shape[1])


# ========== Kernels ==========

def kernel_eval(kernel: Kernel, d: float) -> float:
    """
    Evaluate k(d) in closed form.

    Args:
        kernel (Kernel): Matérn 3/2 or OU kernel
        d (float): Non-negative distance

    Returns:
        float: Covariance value

    Raises:
        DomainError: If d is negative
    """
    if d < 0:
        raise DomainError(f"Kernel distance must be non-negative, got {d}")
    return float(kernel.value(d))


def kernel_deriv(kernel: Matern32Kernel, d: float) -> float:
    """
    Evaluate ∂k/∂d for the Matérn 3/2 kernel.

    Raises:
        DomainError: If d is negative or the kernel has no analytic derivative
    """
    if not isinstance(kernel, Matern32Kernel):
        raise DomainError("Analytic kernel derivative is only available for Matérn 3/2")
    if d < 0:
        raise DomainError(f"Kernel distance must be non-negative, got {d}")
    return float(kernel.derivative(d))


def gram_matrix(kernel: Kernel, inputs: np.ndarray) -> np.ndarray:
    """Kernel Gram matrix K(X, X) without noise."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    return kernel.value(cdist(inputs, inputs))


# ========== Fitting ==========

def gp_fit(
    inputs: np.ndarray,
    targets: np.ndarray,
    noises: np.ndarray,
    kernel: Kernel,
    prior_mean: float = 0.0,
) -> GpModel:
    """
    Fit a GP by factorizing (K + K_x) with escalating diagonal jitter.

    Args:
        inputs (np.ndarray): (n, dim) training inputs
        targets (np.ndarray): (n,) targets
        noises (np.ndarray): (n,) noise variances, or a scalar broadcast to all points
        kernel (Kernel): Covariance function
        prior_mean (float): Constant prior mean subtracted before regression

    Returns:
        GpModel: Immutable fitted model

    Raises:
        DomainError: On inconsistent lengths or negative noise
        SingularCovarianceError: If factorization fails at the largest jitter
    """
    targets = np.asarray(targets, dtype=float).reshape(-1)
    n = targets.shape[0]
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim > 1:
        consistent = inputs.shape[0] == n
    else:
        consistent = inputs.size == 0 if n == 0 else inputs.size > 0 and inputs.size % n == 0
    if not consistent:
        raise DomainError(f"Inputs {inputs.shape} do not match {n} targets")
    inputs = inputs.reshape(n, -1) if n else np.zeros((0, 3))
    try:
        noises = np.broadcast_to(np.asarray(noises, dtype=float), (n,)).copy()
    except ValueError as e:
        raise DomainError(f"Noise variances must be a scalar or one per target: {e}") from e

    if np.any(noises < 0):
        raise DomainError("Noise variances must be non-negative")

    if n == 0:
        return GpModel(inputs, targets, noises, kernel, prior_mean)

    covariance = kernel.value(cdist(inputs, inputs))
    covariance[np.diag_indices(n)] += noises
    residual = targets - prior_mean

    for jitter in JITTER_LADDER:
        try:
            factor = linalg.cho_factor(
                covariance + jitter * np.eye(n), lower=True, check_finite=False
            )
        except linalg.LinAlgError:
            continue
        if jitter > 0:
            logger.debug(f"Cholesky needed jitter {jitter:g} for {n} points")
        alpha = linalg.cho_solve(factor, residual, check_finite=False)
        return GpModel(inputs, targets, noises, kernel, prior_mean, factor, alpha, jitter)

    raise SingularCovarianceError(
        f"Covariance of {n} points is not positive definite after jitter {JITTER_LADDER[-1]:g}"
    )


# ========== Prediction ==========

def _check_queries(model: GpModel, queries: np.ndarray) -> np.ndarray:
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if model.size and queries.shape[1] != model.dim:
        raise DomainError(f"Query dimension {queries.shape[1]} does not match model {model.dim}")
    return queries


def predict_mean_batch(model: GpModel, queries: np.ndarray) -> np.ndarray:
    """Posterior mean at each query row."""
    queries = _check_queries(model, queries)
    if model.size == 0:
        return np.full(queries.shape[0], model.prior_mean)
    cross = model.kernel.value(cdist(queries, model.inputs))
    return model.prior_mean + cross @ model.alpha


def predict_batch(model: GpModel, queries: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Posterior mean and variance at each query row.

    Args:
        model (GpModel): Fitted model
        queries (np.ndarray): (m, dim) query points

    Returns:
        tuple: (mean (m,), variance (m,)) with variance clipped to [0, k(0)]
    """
    queries = _check_queries(model, queries)
    prior = model.kernel.prior_variance
    if model.size == 0:
        m = queries.shape[0]
        return np.full(m, model.prior_mean), np.full(m, prior)

    cross = model.kernel.value(cdist(queries, model.inputs))
    mean = model.prior_mean + cross @ model.alpha
    lower, _ = model.factor
    v = linalg.solve_triangular(lower, cross.T, lower=True, check_finite=False)
    variance = prior - np.einsum("ij,ij->j", v, v)
    return mean, np.clip(variance, 0.0, prior)


def gp_predict(model: GpModel, query: np.ndarray) -> Tuple[float, float]:
    """
    Posterior mean and variance at a single point.

    Returns:
        tuple: (mean, variance)
    """
    mean, variance = predict_batch(model, np.asarray(query, dtype=float).reshape(1, -1))
    return float(mean[0]), float(variance[0])


# ========== Gradients ==========

def _cross_gradient(model: GpModel, queries: np.ndarray) -> np.ndarray:
    """∇_x* k(x*, x_i) for every query/training pair, shape (m, n, dim)."""
    diff = queries[:, None, :] - model.inputs[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(dist > 0, model.kernel.derivative(dist) / dist, 0.0)
    return diff * scale[:, :, None]


def _require_matern(model: GpModel):
    if not isinstance(model.kernel, Matern32Kernel):
        raise DomainError("Gradient queries require the Matérn 3/2 kernel")


def mean_gradient_batch(model: GpModel, queries: np.ndarray) -> np.ndarray:
    """∇μ(x*) = ∇k_*ᵀ α for each query row."""
    _require_matern(model)
    queries = _check_queries(model, queries)
    out = np.zeros_like(queries)
    if model.size == 0:
        return out
    for start in range(0, queries.shape[0], GRADIENT_CHUNK):
        block = queries[start:start + GRADIENT_CHUNK]
        out[start:start + GRADIENT_CHUNK] = np.einsum(
            "n,mnd->md", model.alpha, _cross_gradient(model, block)
        )
    return out


def var_gradient_batch(model: GpModel, queries: np.ndarray) -> np.ndarray:
    """
    ∇σ²(x*) = -2 k_*ᵀ (K + K_x)^-1 ∇k_* for each query row.

    The sign follows from differentiating the predictive variance directly.
    """
    _require_matern(model)
    queries = _check_queries(model, queries)
    out = np.zeros_like(queries)
    if model.size == 0:
        return out
    for start in range(0, queries.shape[0], GRADIENT_CHUNK):
        block = queries[start:start + GRADIENT_CHUNK]
        cross = model.kernel.value(cdist(block, model.inputs))
        weights = linalg.cho_solve(model.factor, cross.T, check_finite=False)
        out[start:start + GRADIENT_CHUNK] = -2.0 * np.einsum(
            "nm,mnd->md", weights, _cross_gradient(model, block)
        )
    return out


def gp_var_gradient(model: GpModel, query: np.ndarray) -> np.ndarray:
    """Variance gradient at a single point, shape (dim,)."""
    return var_gradient_batch(model, np.asarray(query, dtype=float).reshape(1, -1))[0]
