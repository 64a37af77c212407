"""The four projection test families, the GLM fitter behind them, and
the fixed-projection power oracle.

All statistics operate on the stacked response ``Y`` (2p x m) of
:func:`mesonet.netmodel.build_response` and a projection block ``B``
(p x q).  With ``s = Y @ 1_m`` split into per-sample halves ``s1, s2``:

* ``w_E``   Wald quadratic form with misspecification-adjusted covariance,
  chi-square reference with q degrees of freedom (known dispersion);
* ``w_EUD`` the same rescaled by an estimated dispersion;
* ``w_G``   Gaussian F-ratio valid at any m >= 1 (conservative cutoff);
* ``w_GP``  Gaussian F-ratio pooling replicates, exact for m > 1.

Projections enter only through their column spaces: replacing (U, V) by
(U O_r, V O_c) for orthogonal O leaves every statistic unchanged.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ArgumentError, NumericalError
from . import numkit
from .netmodel import build_response, effective_set

_IRLS_TOL = 1e-10
_IRLS_MAX_ITER = 100
# Natural parameters past this magnitude mean the logistic fit is
# separating; the MLE is off at infinity.
_ETA_DIVERGE = 500.0


@dataclass(frozen=True)
class GlmFit:
    """Fitted working-model coefficients (pooled level and half-difference)."""

    gamma1: np.ndarray
    gamma2: np.ndarray
    converged: bool
    iterations: int


@dataclass(frozen=True)
class RefDist:
    """Reference distribution of a test statistic: chi2(df) or f(nu1, nu2)."""

    kind: str
    df: Optional[int] = None
    nu1: Optional[int] = None
    nu2: Optional[int] = None

    def sf(self, x):
        if self.kind == "chi2":
            return float(1.0 - numkit.chi2_cdf(x, self.df))
        if self.kind == "f":
            return float(1.0 - numkit.f_cdf(x, self.nu1, self.nu2))
        raise ArgumentError(f"no analytic tail for reference kind {self.kind!r}")

    def label(self):
        if self.kind == "chi2":
            return f"chi2({self.df})"
        if self.kind == "f":
            return f"f({self.nu1},{self.nu2})"
        return self.kind


@dataclass(frozen=True)
class TestReport:
    """Outcome of one two-sample test."""

    statistic: float
    ref_dist: RefDist
    p_value: float
    reject: bool
    alpha: float
    method: str
    effective_dim: int
    requested_dim: Optional[int] = None
    projection_source: str = "user"
    ncp_oracle: Optional[float] = None
    notes: dict = field(default_factory=dict)

    def to_dict(self):
        d = {
            "statistic": self.statistic,
            "ref_dist": self.ref_dist.label(),
            "p_value": self.p_value,
            "reject": bool(self.reject),
            "alpha": self.alpha,
            "method": self.method,
            "effective_dim": self.effective_dim,
            "requested_dim": self.requested_dim,
            "projection_source": self.projection_source,
        }
        if self.ncp_oracle is not None:
            d["ncp_oracle"] = self.ncp_oracle
        if self.notes:
            d["notes"] = dict(self.notes)
        return d


def _make_report(stat, ref, alpha, method, q, P, ncp_oracle=None, notes=None):
    p_value = ref.sf(stat)
    p_value = float(min(max(p_value, 0.0), 1.0))
    return TestReport(
        statistic=float(stat),
        ref_dist=ref,
        p_value=p_value,
        reject=bool(p_value < alpha),
        alpha=float(alpha),
        method=method,
        effective_dim=int(q),
        requested_dim=P.requested_d,
        projection_source=P.source,
        ncp_oracle=None if ncp_oracle is None else float(ncp_oracle),
        notes={} if notes is None else dict(notes),
    )


def _response_and_block(data, S, P):
    """Shared entry: stacked response, projection block, and sanity checks."""
    Y = build_response(data, S)
    p = Y.shape[0] // 2
    B = P.design_block()
    if B.shape[0] != p:
        raise ArgumentError(
            f"projection block has {B.shape[0]} rows but the hypothesis set "
            f"produces {p} response coordinates"
        )
    if B.shape[1] > p:
        raise ArgumentError("projection dimension exceeds the hypothesis set size")
    return Y, B


# ---------------------------------------------------------------------------
# GLM fitting.
# ---------------------------------------------------------------------------


def _eta(B, gamma1, gamma2):
    t1 = B @ (gamma1 + gamma2)
    t2 = B @ (gamma1 - gamma2)
    return t1, t2


def _logit_loglik(s1, s2, eta1, eta2, m):
    # sum_i s_i eta_i - m * H(eta_i) with H(x) = log(1 + e^x), stably.
    H1 = np.logaddexp(0.0, eta1)
    H2 = np.logaddexp(0.0, eta2)
    return float(s1 @ eta1 + s2 @ eta2 - m * (H1.sum() + H2.sum()))


def fit_two_group_glm(Y, P, family, tol=_IRLS_TOL, max_iter=_IRLS_MAX_ITER):
    """Fit the two-group working GLM and return (gamma1, gamma2).

    Gaussian: the design is orthogonal so the estimate is closed-form.
    Logistic: full Newton scoring from gamma = 0, stopping when the
    maximum absolute score entry falls below ``tol``, with step-halving
    whenever a step would decrease the log-likelihood.  Divergence
    (separation) raises instead of returning garbage.

    Works on the compact per-layer representation: the m-fold design
    stack only ever enters through the layer-summed response.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] % 2 != 0:
        raise ArgumentError(f"response must be (2p x m), got {Y.shape}")
    p = Y.shape[0] // 2
    m = Y.shape[1]
    B = P.design_block()
    if B.shape[0] != p:
        raise ArgumentError(
            f"projection block rows ({B.shape[0]}) do not match response ({p})"
        )
    s = Y.sum(axis=1)
    s1, s2 = s[:p], s[p:]

    if family.kind == "gaussian":
        gamma1 = B.T @ (s1 + s2) / (2.0 * m)
        gamma2 = B.T @ (s1 - s2) / (2.0 * m)
        return GlmFit(gamma1=gamma1, gamma2=gamma2, converged=True, iterations=0)

    if family.kind != "bernoulli_logit":
        raise ArgumentError(f"unsupported family {family.kind!r} for GLM fitting")

    q = B.shape[1]
    gamma = np.zeros(2 * q)
    eta1, eta2 = _eta(B, gamma[:q], gamma[q:])
    loglik = _logit_loglik(s1, s2, eta1, eta2, m)
    for it in range(1, max_iter + 1):
        mu1 = family.h(eta1)
        mu2 = family.h(eta2)
        r1 = s1 - m * mu1
        r2 = s2 - m * mu2
        score = np.concatenate([B.T @ (r1 + r2), B.T @ (r1 - r2)])
        if np.max(np.abs(score)) < tol:
            return GlmFit(gamma1=gamma[:q], gamma2=gamma[q:], converged=True, iterations=it - 1)
        w1 = family.h_prime(eta1)
        w2 = family.h_prime(eta2)
        Bp = B.T @ (B * (w1 + w2)[:, None])
        Bm = B.T @ (B * (w1 - w2)[:, None])
        info = m * np.block([[Bp, Bm], [Bm, Bp]])
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                "singular Fisher information in IRLS (separated or degenerate fit)",
                iteration=it, score_max=float(np.max(np.abs(score))),
            ) from exc
        # step-halving: accept the first step that does not lower the likelihood
        for _ in range(40):
            cand = gamma + step
            c1, c2 = _eta(B, cand[:q], cand[q:])
            if np.max(np.abs(c1)) > _ETA_DIVERGE or np.max(np.abs(c2)) > _ETA_DIVERGE:
                raise NumericalError(
                    "IRLS diverged: fitted natural parameters ran away "
                    "(likely separation in the binary response)",
                    iteration=it, eta_max=float(max(np.max(np.abs(c1)), np.max(np.abs(c2)))),
                )
            cand_ll = _logit_loglik(s1, s2, c1, c2, m)
            if cand_ll >= loglik - 1e-12 * max(1.0, abs(loglik)):
                break
            step = step / 2.0
        else:
            raise NumericalError(
                "IRLS step-halving failed to find an ascent step",
                iteration=it, loglik=loglik,
            )
        gamma, eta1, eta2, loglik = cand, c1, c2, cand_ll
    raise NumericalError(
        f"IRLS did not converge in {max_iter} iterations",
        iterations=max_iter, score_max=float(np.max(np.abs(score))),
    )


# ---------------------------------------------------------------------------
# Dispersion-known Wald test (w_E) and its unknown-dispersion rescaling.
# ---------------------------------------------------------------------------


def _pooled_variance_weights(Y, family, m, mode):
    """h'(theta_tilde) per response coordinate, from pooled edge means.

    ``mode='pooled_mean'`` evaluates the variance function at the raw
    pooled per-pair mean; ``mode='shrunk'`` first moves the pooled mean
    toward 1/2 by 1/(4m) (without crossing it), which keeps the weights
    away from zero for binary data at small m.
    """
    p = Y.shape[0] // 2
    pooled = (Y[:p] + Y[p:]).sum(axis=1) / (2.0 * m)
    if mode == "shrunk":
        if family.kind != "bernoulli_logit":
            raise ArgumentError("theta_tilde_mode='shrunk' only applies to binary families")
        shift = 1.0 / (4.0 * m)
        pooled = np.where(
            np.abs(pooled - 0.5) <= shift, 0.5, pooled - np.sign(pooled - 0.5) * shift
        )
    elif mode != "pooled_mean":
        raise ArgumentError(
            f"unknown theta_tilde_mode {mode!r}; expected 'pooled_mean' or 'shrunk'"
        )
    return family.var_from_mean(pooled)


def _wald_core(data, S, P, theta_tilde_mode, tol, max_iter):
    Y, B = _response_and_block(data, S, P)
    m = Y.shape[1]
    fit = fit_two_group_glm(Y, P, data.family, tol=tol, max_iter=max_iter)
    wF = _pooled_variance_weights(Y, data.family, m, theta_tilde_mode)
    F_hat = 2.0 * (B.T @ (B * wF[:, None]))
    wG = data.family.h_prime(B @ fit.gamma1)
    G_hat = 2.0 * (B.T @ (B * wG[:, None]))
    g2 = G_hat @ fit.gamma2
    try:
        x = np.linalg.solve(F_hat, g2)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "F_hat is singular; pooled variance weights hit zero "
            "(consider theta_tilde_mode='shrunk')",
            min_weight=float(np.min(wF)),
        ) from exc
    stat = float(m * (g2 @ x))
    if not math.isfinite(stat):
        raise NumericalError("non-finite Wald statistic", statistic=stat)
    return Y, B, fit, stat


def stat_E(data, S, P, theta_tilde_mode="pooled_mean", alpha=0.05,
           ncp_oracle=None, tol=_IRLS_TOL, max_iter=_IRLS_MAX_ITER):
    """Known-dispersion Wald test; chi-square reference with q = rank degrees.

    The chi-square calibration treats the family dispersion as known and
    equal to one (exact for binary edges); for Gaussian data with unknown
    sigma use :func:`stat_G`/:func:`stat_GP`, or :func:`stat_EUD` to
    estimate the dispersion.
    """
    S_eff = effective_set(S, data.n)
    Y, B, fit, stat = _wald_core(data, S_eff, P, theta_tilde_mode, tol, max_iter)
    q = B.shape[1]
    ref = RefDist(kind="chi2", df=q)
    notes = {"theta_tilde_mode": theta_tilde_mode, "glm_iterations": fit.iterations}
    return _make_report(stat, ref, alpha, "E", q, P, ncp_oracle, notes)


def _dispersion_estimate(Y, B, fit, family, estimator):
    """Pearson-type dispersion estimators from the fitted working model."""
    p = Y.shape[0] // 2
    m = Y.shape[1]
    q = B.shape[1]
    eta1, eta2 = _eta(B, fit.gamma1, fit.gamma2)
    mu_hat = np.concatenate([eta1, eta2])
    fitted = family.h(mu_hat)
    weights = family.h_prime(mu_hat)
    if np.any(weights <= 0):
        raise NumericalError(
            "non-positive variance weights in dispersion estimate",
            min_weight=float(np.min(weights)),
        )
    if estimator == "phi_hat1":
        dof = 2.0 * (p * m - q)
        if dof <= 0:
            raise ArgumentError(
                f"phi_hat1 needs p*m > q, got p={p}, m={m}, q={q}"
            )
        resid = Y - fitted[:, None]
        value = float(np.sum(resid * resid / weights[:, None]) / dof)
    elif estimator == "phi_hat2":
        dof = 2.0 * (p - q)
        if dof <= 0:
            raise ArgumentError(
                f"phi_hat2 needs p > q, got p={p}, q={q}"
            )
        ybar = Y.mean(axis=1)
        resid = ybar - fitted
        value = float(m * np.sum(resid * resid / weights) / dof)
    else:
        raise ArgumentError(
            f"unknown dispersion_estimator {estimator!r}; expected 'phi_hat1' or 'phi_hat2'"
        )
    if value <= 0 or not math.isfinite(value):
        raise NumericalError("estimated dispersion is not positive", dispersion=value)
    return value


def stat_EUD(data, S, P, dispersion_estimator="phi_hat2", theta_tilde_mode="pooled_mean",
             alpha=0.05, ncp_oracle=None, tol=_IRLS_TOL, max_iter=_IRLS_MAX_ITER):
    """Unknown-dispersion Wald test: w_E rescaled by an estimated dispersion.

    ``phi_hat1`` is the per-observation Pearson estimator; ``phi_hat2``
    (default) averages layers first and is the better-behaved choice for
    binary data.
    """
    S_eff = effective_set(S, data.n)
    Y, B, fit, stat = _wald_core(data, S_eff, P, theta_tilde_mode, tol, max_iter)
    q = B.shape[1]
    phi2 = _dispersion_estimate(Y, B, fit, data.family, dispersion_estimator)
    ref = RefDist(kind="chi2", df=q)
    notes = {
        "theta_tilde_mode": theta_tilde_mode,
        "dispersion_estimator": dispersion_estimator,
        "dispersion": phi2,
        "glm_iterations": fit.iterations,
    }
    return _make_report(stat / phi2, ref, alpha, "E-UD", q, P, ncp_oracle, notes)


# ---------------------------------------------------------------------------
# Gaussian F-ratio tests.
# ---------------------------------------------------------------------------


def _gaussian_parts(data, S, P):
    if data.family.kind != "gaussian":
        raise ArgumentError("Gaussian F tests require the gaussian edge family")
    S_eff = effective_set(S, data.n)
    Y, B = _response_and_block(data, S_eff, P)
    p = Y.shape[0] // 2
    s = Y.sum(axis=1)
    bt_s1 = B.T @ s[:p]
    bt_s2 = B.T @ s[p:]
    # ||W^T Y 1||^2 with W = (1/sqrt(2)) [B; -B]
    num = 0.5 * float(np.sum((bt_s1 - bt_s2) ** 2))
    return Y, B, p, s, num


def stat_G(data, S, P, alpha=0.05, ncp_oracle=None):
    """Gaussian projection F test valid at any m >= 1.

    The denominator pools all residual variation around the projected
    column-mean, giving nu2 = 2(pm - q) degrees of freedom.  The central-F
    cutoff is conservative: under the null the denominator carries a
    non-negative non-centrality from working-model misspecification, which
    only deflates the ratio.
    """
    Y, B, p, s, num = _gaussian_parts(data, S, P)
    m = Y.shape[1]
    q = B.shape[1]
    nu1 = q
    nu2 = 2 * (p * m - q)
    if nu2 <= 0:
        raise ArgumentError(f"stat_G needs p*m > q, got p={p}, m={m}, q={q}")
    proj = np.concatenate([B @ (B.T @ s[:p]), B @ (B.T @ s[p:])])
    resid = Y - np.outer(proj, np.ones(m)) / m
    den = float(np.sum(resid * resid))
    if den <= 0:
        raise NumericalError("zero residual denominator in stat_G", denominator=den)
    stat = nu2 * num / (nu1 * m * den)
    ref = RefDist(kind="f", nu1=nu1, nu2=nu2)
    return _make_report(stat, ref, alpha, "G", q, P, ncp_oracle,
                        notes={"conservative_cutoff": True})


def stat_GP(data, S, P, alpha=0.05, ncp_oracle=None):
    """Gaussian projection F test pooling replicates (m > 1); exact null law.

    With fixed projections the statistic follows a non-central
    F(nu1, nu2') whose non-centrality vanishes under the null, so the
    central-F cutoff is exact at every m and n.
    """
    Y, B, p, s, num = _gaussian_parts(data, S, P)
    m = Y.shape[1]
    if m < 2:
        raise ArgumentError("stat_GP needs m > 1 replicates; use stat_G at m = 1")
    q = B.shape[1]
    nu1 = q
    nu2p = 2 * (m - 1) * q
    Yc = Y - Y.mean(axis=1, keepdims=True)
    top = B.T @ Yc[:p]
    bot = B.T @ Yc[p:]
    den = float(np.sum(top * top) + np.sum(bot * bot))
    if den <= 0:
        raise NumericalError("zero residual denominator in stat_GP", denominator=den)
    stat = nu2p * num / (nu1 * m * den)
    ref = RefDist(kind="f", nu1=nu1, nu2=nu2p)
    return _make_report(stat, ref, alpha, "G-P", q, P, ncp_oracle)


# ---------------------------------------------------------------------------
# Power oracle for fixed projections.
# ---------------------------------------------------------------------------


def ncp_psi(theta1_S, theta2_S, P, m, sigma2):
    """Non-centrality of the Gaussian projection tests at true parameters.

    psi = (m / 2 sigma^2) * ||U^T (Theta1_S - Theta2_S) V||_F^2, computed
    through the general basis when the pair is not Kronecker.  Bounded
    above by the unprojected Frobenius norm, with equality for
    full-dimensional projections.
    """
    if sigma2 <= 0:
        raise ArgumentError(f"sigma2 must be positive, got {sigma2}")
    diff = np.asarray(theta1_S, dtype=float) - np.asarray(theta2_S, dtype=float)
    if P.is_kronecker:
        core = P.U.T @ diff @ P.V
        return float(m / (2.0 * sigma2) * np.sum(core * core))
    if diff.ndim != 1 or diff.shape[0] != P.basis.shape[0]:
        raise ArgumentError(
            "a general-basis pair needs the S-block difference as a vector "
            "in response coordinate order (canonical pair order), "
            f"got shape {diff.shape} for a basis with {P.basis.shape[0]} rows"
        )
    v = P.basis.T @ diff
    return float(m / (2.0 * sigma2) * np.sum(v * v))


def power_oracle_GP(psi, nu1, nu2p, alpha):
    """Exact power of the pooled Gaussian test at non-centrality psi."""
    if psi < 0:
        raise ArgumentError(f"psi must be >= 0, got {psi}")
    if not 0.0 < alpha < 1.0:
        raise ArgumentError(f"alpha must be in (0,1), got {alpha}")
    cutoff = numkit.f_quantile(nu1, nu2p, 1.0 - alpha)
    return float(1.0 - numkit.noncentral_f_cdf(cutoff, nu1, nu2p, psi))
