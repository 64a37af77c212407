"""Dense linear algebra primitives and distribution special functions.

Everything downstream (design builders, test statistics, projection
learning, the simulation harness) is written against this module so that
numerical conventions are fixed in exactly one place:

* singular vectors carry a deterministic sign (largest-magnitude entry of
  each left singular vector is positive), so subspace comparisons across
  runs and platforms are stable;
* the numerical-rank threshold is ``1e-10 * s_max * max(rows, cols)``
  everywhere a rank decision is made;
* quantiles are computed by bisection on the CDF, robust over fast.

The heavy lifting (LAPACK SVD/QR, regularized incomplete beta and gamma)
is delegated to numpy/scipy; this module owns the conventions, not the
kernels.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ArgumentError, NumericalError

# Relative floor (times s_max * max(rows, cols)) below which singular
# values are treated as zero.
RANK_REL_TOL = 1e-10

# Non-central F series: stop once the Poisson term weight falls below
# this fraction of the accumulated weight, after passing the mode.
_NCF_TERM_REL = 1e-14
_NCF_MAX_TERMS = 100_000

# Bisection bracket width for quantile inversion.
_BISECT_TOL = 1e-10


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``M = U @ diag(s) @ V.T`` with deterministic signs.

    ``U`` and ``V`` hold left/right singular vectors as columns; ``s`` is
    non-increasing and non-negative.
    """

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray

    def reconstruct(self):
        return (self.U * self.s) @ self.V.T

    def rank(self, rel_tol=RANK_REL_TOL):
        """Numerical rank under the package-wide relative threshold."""
        if self.s.size == 0 or self.s[0] == 0.0:
            return 0
        m = max(self.U.shape[0], self.V.shape[0])
        return int(np.sum(self.s > rel_tol * self.s[0] * m))


def _as_matrix(M, name="M"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise ArgumentError(f"{name} must be a 2-d matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ArgumentError(f"{name} contains non-finite entries")
    return M


def svd_thin(M):
    """Thin SVD with the package sign convention.

    The sign of each singular pair is fixed so that the largest-magnitude
    entry of the left singular vector is positive.  Ties are broken by the
    first such entry, which makes the output deterministic.
    """
    M = _as_matrix(M)
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # extremely rare for finite input
        raise NumericalError(f"SVD did not converge: {exc}", shape=M.shape) from exc
    V = Vt.T
    for j in range(U.shape[1]):
        i = int(np.argmax(np.abs(U[:, j])))
        if U[i, j] < 0:
            U[:, j] = -U[:, j]
            V[:, j] = -V[:, j]
    return SvdResult(U=U, s=s, V=V)


def rank_truncate(M, d):
    """Best rank-``d`` approximation in Frobenius norm (Eckart-Young)."""
    M = _as_matrix(M)
    if not 1 <= d <= min(M.shape):
        raise ArgumentError(
            f"truncation rank d={d} out of range [1, {min(M.shape)}] for shape {M.shape}"
        )
    res = svd_thin(M)
    return (res.U[:, :d] * res.s[:d]) @ res.V[:, :d].T


def _rank_tol(s, shape):
    if s.size == 0:
        return 0.0
    return RANK_REL_TOL * s[0] * max(shape)


def pinv(M):
    """Moore-Penrose pseudoinverse with the shared rank threshold.

    The zero matrix maps to the zero (transposed-shape) matrix.
    """
    M = _as_matrix(M)
    res = svd_thin(M)
    tol = _rank_tol(res.s, M.shape)
    inv = np.zeros_like(res.s)
    keep = res.s > tol
    inv[keep] = 1.0 / res.s[keep]
    return (res.V * inv) @ res.U.T


def orthonormal_basis(M):
    """Orthonormal basis for the column space of ``M``.

    Returns the leading left singular vectors; column count equals the
    numerical rank.  All-zero input is an error (there is no basis for
    the trivial space).
    """
    M = _as_matrix(M)
    res = svd_thin(M)
    tol = _rank_tol(res.s, M.shape)
    r = int(np.sum(res.s > tol))
    if r == 0:
        raise ArgumentError("cannot build an orthonormal basis for a zero matrix")
    return res.U[:, :r].copy()


def haar_stiefel(p, d, rng):
    """Draw a uniform (Haar) random p x d orthonormal matrix.

    QR of a standard Gaussian matrix, with the R-diagonal sign fix that
    makes the factorization unique and the draw exactly Haar-distributed.
    """
    if d > p:
        raise ArgumentError(f"haar_stiefel needs d <= p, got d={d} > p={p}")
    if d < 1 or p < 1:
        raise ArgumentError("haar_stiefel dimensions must be >= 1")
    G = rng.standard_normal((p, d))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def projector_distance(A, B):
    """Frobenius distance between the orthogonal projectors onto col(A), col(B).

    Both inputs must have orthonormal columns.  Zero iff the column spaces
    coincide; used throughout the tests as the subspace-recovery metric.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    return float(np.linalg.norm(A @ A.T - B @ B.T))


# ---------------------------------------------------------------------------
# Distribution functions.
# ---------------------------------------------------------------------------


def chi2_cdf(x, df):
    """Chi-square CDF via the regularized lower incomplete gamma."""
    if df < 1:
        raise ArgumentError(f"chi-square df must be >= 1, got {df}")
    x = np.asarray(x, dtype=float)
    return special.gammainc(df / 2.0, np.maximum(x, 0.0) / 2.0)


def f_cdf(x, nu1, nu2):
    """Central F CDF via the regularized incomplete beta."""
    if nu1 < 1 or nu2 < 1:
        raise ArgumentError(f"F degrees of freedom must be >= 1, got ({nu1}, {nu2})")
    x = np.asarray(np.maximum(x, 0.0), dtype=float)
    t = nu1 * x / (nu2 + nu1 * x)
    return special.betainc(nu1 / 2.0, nu2 / 2.0, t)


def _bisect_quantile(cdf, p, hi_start=1.0):
    """Invert a scalar CDF by bracketing + bisection to width 1e-10."""
    lo, hi = 0.0, hi_start
    for _ in range(2000):
        if cdf(hi) >= p:
            break
        hi *= 2.0
    else:  # pragma: no cover - would need p astronomically close to 1
        raise NumericalError("quantile bracket search failed", p=p, hi=hi)
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:  # float resolution floor
            break
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def chi2_quantile(df, p):
    """p-quantile of the chi-square distribution with ``df`` degrees of freedom."""
    if not 0.0 < p < 1.0:
        raise ArgumentError(f"quantile probability must be in (0,1), got {p}")
    if df < 1:
        raise ArgumentError(f"chi-square df must be >= 1, got {df}")
    return _bisect_quantile(lambda x: float(chi2_cdf(x, df)), p, hi_start=max(df, 1.0))


def f_quantile(nu1, nu2, p):
    """p-quantile of the central F distribution."""
    if not 0.0 < p < 1.0:
        raise ArgumentError(f"quantile probability must be in (0,1), got {p}")
    if nu1 < 1 or nu2 < 1:
        raise ArgumentError(f"F degrees of freedom must be >= 1, got ({nu1}, {nu2})")
    return _bisect_quantile(lambda x: float(f_cdf(x, nu1, nu2)), p)


def noncentral_f_cdf(x, nu1, nu2, lam):
    """CDF of the non-central F distribution with non-centrality ``lam``.

    Evaluates the Poisson-weighted series of regularized incomplete beta
    terms

        sum_j  exp(-lam/2) (lam/2)^j / j!  *  I(nu1 x / (nu2 + nu1 x); nu1/2 + j, nu2/2)

    truncated once the term weight has passed the Poisson mode and dropped
    below 1e-14 of the accumulated weight (hard cap 1e5 terms).  The series
    is monotone non-increasing in ``lam`` at fixed ``x``.
    """
    if lam < 0:
        raise ArgumentError(f"non-centrality must be >= 0, got {lam}")
    if nu1 < 1 or nu2 < 1:
        raise ArgumentError(f"F degrees of freedom must be >= 1, got ({nu1}, {nu2})")
    x = float(x)
    if x <= 0.0:
        return 0.0
    t = nu1 * x / (nu2 + nu1 * x)
    half = lam / 2.0
    log_w = -half  # log of the Poisson(lam/2) weight at j=0
    total = 0.0
    acc_weight = 0.0
    for j in range(_NCF_MAX_TERMS):
        w = np.exp(log_w)
        total += w * special.betainc(nu1 / 2.0 + j, nu2 / 2.0, t)
        acc_weight += w
        past_mode = j >= half
        if past_mode and w < _NCF_TERM_REL * acc_weight:
            break
        log_w += np.log(half) - np.log(j + 1.0) if half > 0 else -np.inf
        if not np.isfinite(log_w):
            break
    return float(min(max(total, 0.0), 1.0))
