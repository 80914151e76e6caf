"""Dirichlet-distribution primitives and the special functions they need.

Every operation works on the last axis of its array arguments, so a whole
grid of concentration vectors can be processed in one call. Scalar special
functions (digamma, trigamma, their inverse) are implemented directly via
the recurrence + de Moivre asymptotic series so the maximum-likelihood
fixed point has no external dependency; scipy supplies only ``gammaln``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import ContractError

EULER_GAMMA = 0.5772156649015329

# Components below this are raised to it and the vector renormalized before
# any log is taken; detectors emit exact zeros.
SCORE_EPS = 1e-6

# Unit-sum tolerance for a vector to count as a point on the simplex.
SIMPLEX_ATOL = 1e-9

_SERIES_CUTOFF = 10.0


@dataclass(frozen=True)
class DirichletParams:
    """A strictly positive concentration vector of dimension >= 2."""

    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim != 1 or a.size < 2:
            raise ContractError(f"concentration vector must be 1-D with >= 2 entries, got shape {a.shape}")
        if not np.all(np.isfinite(a)) or not np.all(a > 0):
            raise ContractError("concentration parameters must be finite and strictly positive")
        a = a.copy()
        a.flags.writeable = False
        object.__setattr__(self, "alpha", a)

    @property
    def dim(self) -> int:
        return self.alpha.size

    @property
    def total(self) -> float:
        return float(self.alpha.sum())

    def mean(self) -> np.ndarray:
        return self.alpha / self.alpha.sum()


@dataclass(frozen=True)
class DirichletFit:
    """Result of a maximum-likelihood fit; ``converged`` is False when the
    fixed point hit its iteration cap (degenerate data has no finite MLE)."""

    params: DirichletParams
    converged: bool
    iterations: int


def _as_alpha(params) -> np.ndarray:
    """Accept DirichletParams or an array of concentration vectors."""
    a = params.alpha if isinstance(params, DirichletParams) else np.asarray(params, dtype=float)
    if a.shape[-1] < 2:
        raise ContractError("concentration vectors need at least 2 components")
    if not np.all(np.isfinite(a)) or not np.all(a > 0):
        raise ContractError("concentration parameters must be finite and strictly positive")
    return a


def digamma(x):
    """psi(x) = d/dx log Gamma(x) for x > 0.

    A branch-free recurrence shifts the argument above 10, then the
    asymptotic series with Bernoulli terms through x^-12 applies;
    relative error is below 1e-10 over [1e-3, 1e6]. Accepts scalars or
    arrays and is a hot path for the gaze planner, hence the fixed-count
    shift instead of a data-dependent loop.
    """
    arr = np.asarray(x, dtype=float)
    if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr <= 0.0)):
        raise ContractError("digamma requires strictly positive arguments")
    z = arr if arr.ndim else arr.reshape(1)
    small = z < _SERIES_CUTOFF
    acc = np.zeros_like(z)
    if small.any():
        zs = z[small]
        rec = np.zeros_like(zs)
        for k in range(10):
            rec -= 1.0 / (zs + k)
        acc[small] = rec
        z = np.where(small, z + 10.0, z)
    u = 1.0 / (z * z)
    series = u * (1.0 / 12 - u * (1.0 / 120 - u * (1.0 / 252 - u * (1.0 / 240 - u * (1.0 / 132 - u * (691.0 / 32760))))))
    out = acc + np.log(z) - 0.5 / z - series
    return float(out[0]) if arr.ndim == 0 else out


def trigamma(x):
    """psi'(x) for x > 0, same shift + series scheme as digamma."""
    arr = np.asarray(x, dtype=float)
    if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr <= 0.0)):
        raise ContractError("trigamma requires strictly positive arguments")
    z = arr if arr.ndim else arr.reshape(1)
    small = z < _SERIES_CUTOFF
    acc = np.zeros_like(z)
    if small.any():
        zs = z[small]
        rec = np.zeros_like(zs)
        for k in range(10):
            rec += 1.0 / ((zs + k) * (zs + k))
        acc[small] = rec
        z = np.where(small, z + 10.0, z)
    u = 1.0 / (z * z)
    series = (1.0 + u * (1.0 / 6 - u * (1.0 / 30 - u * (1.0 / 42 - u * (1.0 / 30))))) / z
    out = acc + 0.5 * u + series
    return float(out[0]) if arr.ndim == 0 else out


def inverse_digamma(y):
    """x > 0 such that digamma(x) = y, via Newton from the standard
    initializer (exp(y) + 0.5 for y >= -2.22, else -1/(y + gamma))."""
    arr = np.asarray(y, dtype=float)
    scalar = arr.ndim == 0
    z = np.atleast_1d(arr).astype(float)
    with np.errstate(divide="ignore"):  # the unused branch may hit y = -gamma
        x = np.where(z >= -2.22, np.exp(z) + 0.5, -1.0 / (z + EULER_GAMMA))
    for _ in range(10):
        step = (digamma(x) - z) / trigamma(x)
        x_new = x - step
        # Newton cannot leave the domain from the standard start, but a
        # floor keeps pathological float inputs from poisoning digamma.
        x_new = np.maximum(x_new, x * 1e-3)
        if np.max(np.abs(x_new - x) / x_new) < 1e-13:
            x = x_new
            break
        x = x_new
    return float(x[0]) if scalar else x.reshape(arr.shape)


def clamp_simplex(point, eps: float = SCORE_EPS) -> np.ndarray:
    """Raise components below ``eps`` to it and renormalize to unit sum."""
    p = np.asarray(point, dtype=float)
    if p.shape[-1] < 2:
        raise ContractError("simplex vectors need at least 2 components")
    p = np.maximum(p, eps)
    return p / p.sum(axis=-1, keepdims=True)


def check_simplex(point, atol: float = SIMPLEX_ATOL) -> np.ndarray:
    """Validate non-negativity and unit sum; returns the array unchanged."""
    p = np.asarray(point, dtype=float)
    if np.any(p < 0):
        raise ContractError("simplex vector has negative components")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > atol):
        raise ContractError("simplex vector does not sum to 1")
    return p


def dirichlet_log_pdf(params, point):
    """Log density of Dir(alpha) at ``point``, computed in log space.

    The point is eps-clamped and renormalized first. ``params`` may carry
    leading batch axes, as may ``point``; the two broadcast.
    """
    a = _as_alpha(params)
    p = np.asarray(point, dtype=float)
    if a.shape[-1] != p.shape[-1]:
        raise ContractError(f"dimension mismatch: alpha has {a.shape[-1]} components, point has {p.shape[-1]}")
    p = clamp_simplex(p)
    log_b = gammaln(a).sum(axis=-1) - gammaln(a.sum(axis=-1))
    return ((a - 1.0) * np.log(p)).sum(axis=-1) - log_b


def dirichlet_entropy(params):
    """Differential entropy of Dir(alpha), closed form."""
    a = _as_alpha(params)
    a0 = a.sum(axis=-1)
    k = a.shape[-1]
    log_b = gammaln(a).sum(axis=-1) - gammaln(a0)
    return log_b + (a0 - k) * digamma(a0) - ((a - 1.0) * digamma(a)).sum(axis=-1)


def dirichlet_kl(p_params, q_params):
    """KL divergence D(Dir(p) || Dir(q)), closed form, clipped at 0."""
    p = _as_alpha(p_params)
    q = _as_alpha(q_params)
    if p.shape[-1] != q.shape[-1]:
        raise ContractError("dimension mismatch between the two parameter vectors")
    p0 = p.sum(axis=-1)
    q0 = q.sum(axis=-1)
    psi_p0 = np.asarray(digamma(p0))[..., None]
    kl = (
        gammaln(p0)
        - gammaln(p).sum(axis=-1)
        - gammaln(q0)
        + gammaln(q).sum(axis=-1)
        + ((p - q) * (digamma(p) - psi_p0)).sum(axis=-1)
    )
    # Identical parameters must give exactly 0, not cancellation noise.
    kl = np.where(np.all(np.equal(p, q), axis=-1), 0.0, np.maximum(kl, 0.0))
    return float(kl) if kl.ndim == 0 else kl


def dirichlet_sample(params, rng: np.random.Generator, size=None) -> np.ndarray:
    """Sample via normalized independent Gamma draws.

    ``size=None`` returns one vector; an integer returns (size, dim).
    """
    a = _as_alpha(params)
    if a.ndim != 1:
        raise ContractError("sampling expects a single concentration vector")
    shape = a.shape if size is None else (size, a.size)
    g = rng.gamma(np.broadcast_to(a, shape))
    g = np.maximum(g, 1e-300)  # tiny alphas can underflow a Gamma draw to 0
    return g / g.sum(axis=-1, keepdims=True)


def fit_dirichlet_mle(samples, max_iter: int = 1000, rtol: float = 1e-7) -> DirichletFit:
    """Maximum-likelihood concentration fit by the digamma fixed point.

    Iterates psi(alpha_k') = psi(sum_j alpha_j) + mean(log s_k) from a
    moment-matching start until the largest relative component change
    drops below ``rtol``. Degenerate inputs (e.g. identical samples) have
    no finite MLE; the cap then triggers and the last iterate is returned
    with ``converged=False``.
    """
    try:
        s = np.asarray(samples, dtype=float)
    except ValueError as exc:
        raise ContractError(f"samples must all share one dimension: {exc}") from None
    if s.ndim != 2 or s.shape[0] < 2:
        raise ContractError("need at least 2 samples of equal dimension")
    if s.shape[1] < 2:
        raise ContractError("samples need at least 2 components")
    s = clamp_simplex(s)
    mean_log = np.log(s).mean(axis=0)

    m = s.mean(axis=0)
    e2 = (s * s).mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        a0_per_comp = (m - e2) / (e2 - m * m)
    usable = np.isfinite(a0_per_comp) & (a0_per_comp > 0)
    a0 = float(np.median(a0_per_comp[usable])) if usable.any() else float(s.shape[1])
    alpha = np.maximum(a0 * m, 1e-8)

    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        alpha_new = inverse_digamma(digamma(alpha.sum()) + mean_log)
        delta = np.max(np.abs(alpha_new - alpha) / np.maximum(alpha, 1e-12))
        alpha = alpha_new
        if delta < rtol:
            converged = True
            break
    return DirichletFit(DirichletParams(alpha), converged, iterations)
