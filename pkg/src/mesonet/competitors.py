"""Baseline and competitor tests for the simulation study.

Three families of yardsticks:

* classical per-coordinate tests pooled over the hypothesis set
  (:func:`basic_gaussian_f_test`, :func:`basic_proportion_test`);
* a latent-position bootstrap built on a rank-constrained null fit
  (:func:`admm_constrained`, :func:`position_bootstrap_test`);
* the projection machinery fed with uninformed projections
  (:func:`random_projection_test`, :func:`block_projection_test`).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .numkit import rank_truncate, haar_stiefel, chi2_cdf
from .netmodel import ProjectionPair, build_response, effective_set
from .stattests import (
    RefDist, TestReport, _make_report,
    stat_E, stat_EUD, stat_G, stat_GP,
)


# ---------------------------------------------------------------------------
# Classical pooled tests.
# ---------------------------------------------------------------------------


def basic_gaussian_f_test(data, S, alpha=0.05):
    """Pooled two-sample F test over the hypothesis-set coordinates.

    Classical form: squared distance of the two coordinate-wise sample
    means over its null variance, divided by the coordinate count, with
    the variance replaced by the pooled within-group estimate.
    Algebraically identical to :func:`mesonet.stattests.stat_GP` with
    identity projections.
    """
    if data.family.kind != "gaussian":
        raise ArgumentError("basic_gaussian_f_test expects gaussian edges")
    if data.m < 2:
        raise ArgumentError("the pooled F test needs m > 1 networks per sample")
    Y = build_response(data, S)
    p = Y.shape[0] // 2
    m = Y.shape[1]
    Y1, Y2 = Y[:p], Y[p:]
    mean1 = Y1.mean(axis=1)
    mean2 = Y2.mean(axis=1)
    ssw = float(((Y1 - mean1[:, None]) ** 2).sum() + ((Y2 - mean2[:, None]) ** 2).sum())
    dof = 2 * (m - 1) * p
    pooled_var = ssw / dof
    stat = float(((mean1 - mean2) ** 2).sum()) / (2.0 / m) / (p * pooled_var)
    ref = RefDist(kind="f", nu1=p, nu2=dof)
    p_value = ref.sf(stat)
    return TestReport(
        statistic=stat, ref_dist=ref, p_value=p_value,
        reject=bool(p_value < alpha), alpha=float(alpha),
        method="basic-F", effective_dim=p, projection_source="none",
    )


def basic_proportion_test(data, S, alpha=0.05):
    """Sum of per-pair two-proportion z^2 statistics against chi2(|S|).

    Uses the pooled-variance z statistic without continuity correction;
    pairs whose pooled frequency is 0 or 1 have no variance estimate and
    contribute zero.  At m = 1 the per-pair statistics are too coarse to
    carry evidence and the test never rejects; that case returns p = 1
    with a note rather than an error.
    """
    if data.family.kind != "bernoulli_logit":
        raise ArgumentError("basic_proportion_test expects binary edges")
    Y = build_response(data, S)
    p = Y.shape[0] // 2
    m = Y.shape[1]
    notes = {}
    if m == 1:
        ref = RefDist(kind="chi2", df=p)
        notes["degenerate"] = "m=1: single binary observation per cell, never rejects"
        return TestReport(
            statistic=0.0, ref_dist=ref, p_value=1.0, reject=False,
            alpha=float(alpha), method="basic-prop", effective_dim=p,
            projection_source="none", notes=notes,
        )
    phat1 = Y[:p].mean(axis=1)
    phat2 = Y[p:].mean(axis=1)
    pooled = 0.5 * (phat1 + phat2)
    var = pooled * (1.0 - pooled) * (2.0 / m)
    ok = var > 0
    z2 = np.zeros(p)
    z2[ok] = (phat1[ok] - phat2[ok]) ** 2 / var[ok]
    stat = float(z2.sum())
    ref = RefDist(kind="chi2", df=p)
    p_value = ref.sf(stat)
    if not ok.all():
        notes["zero_variance_pairs"] = int((~ok).sum())
    return TestReport(
        statistic=stat, ref_dist=ref, p_value=p_value,
        reject=bool(p_value < alpha), alpha=float(alpha),
        method="basic-prop", effective_dim=p, projection_source="none",
        notes=notes,
    )


# ---------------------------------------------------------------------------
# Rank-constrained null fit (ADMM) and the position bootstrap.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdmmState:
    """One step of the splitting iteration; layers are (2, n, n) arrays."""

    u: np.ndarray
    z: np.ndarray
    w: np.ndarray
    rho: float
    k: int


@dataclass(frozen=True)
class AdmmResult:
    """Constrained fit: per-sample expected adjacency matrices with
    rank(theta_g) <= d and (near-)equal hypothesis blocks."""

    theta1: np.ndarray
    theta2: np.ndarray
    converged: bool
    iterations: int
    gap: float  # final stopping criterion value

    def __iter__(self):
        return iter((self.theta1, self.theta2))


def admm_constrained(Abar1, Abar2, S, d, rho=1.0, tol=1e-6, K=500):
    """Splitting iteration for the rank-d null fit with equal S-blocks.

    Minimizes the summed squared distance of the two fitted matrices to
    the mean adjacencies subject to rank(theta_g) <= d and equality on
    the hypothesis set.  The w-step averages the data against the
    consensus iterate (S-block jointly over both samples, complement
    per sample), the z-step is a rank-d truncation, and u accumulates
    the residual.  Stops when
    max{ ||z_new - z||_2^2, ||z_new_S^(1) - z_new_S^(2)||_1 } < tol,
    or after K steps (returning the last iterate, flagged).
    """
    Abar1 = np.asarray(Abar1, dtype=float)
    Abar2 = np.asarray(Abar2, dtype=float)
    if (Abar1.shape != Abar2.shape or Abar1.ndim != 2
            or Abar1.shape[0] != Abar1.shape[1]):
        raise ArgumentError("mean adjacency matrices must be square and same shape")
    A = np.stack([Abar1, Abar2])
    n = A.shape[1]
    if rho <= 0:
        raise ArgumentError(f"rho must be positive, got {rho}")
    if not 1 <= d <= n:
        raise ArgumentError(f"rank bound d={d} out of range [1, {n}]")
    mask = S.mask(n)
    off = ~mask

    z = A.copy()
    s_avg = 0.5 * (A[0][mask] + A[1][mask])
    z[0][mask] = s_avg
    z[1][mask] = s_avg
    u = np.zeros_like(z)

    c_s_data = 2.0 / (4.0 + 2.0 * rho)
    c_s_cons = rho / (4.0 + 2.0 * rho)
    c_o_data = 2.0 / (2.0 + rho)
    c_o_cons = rho / (2.0 + rho)
    pooled_s = A[0][mask] + A[1][mask]

    converged = False
    gap = float("inf")
    it = 0
    w = np.empty_like(z)
    for it in range(1, K + 1):
        w_s = c_s_data * pooled_s + c_s_cons * (
            z[0][mask] + z[1][mask] - u[0][mask] - u[1][mask]
        )
        for g in (0, 1):
            w[g][mask] = w_s
            w[g][off] = c_o_data * A[g][off] + c_o_cons * (z[g][off] - u[g][off])
        z_new = np.stack([rank_truncate(w[g] + u[g], d) for g in (0, 1)])
        gap = max(
            float(((z_new - z) ** 2).sum()),
            float(np.abs(z_new[0][mask] - z_new[1][mask]).sum()),
        )
        u += w - z_new
        z = z_new
        if gap < tol:
            converged = True
            break
    return AdmmResult(
        theta1=z[0], theta2=z[1], converged=converged, iterations=it, gap=gap,
    )


def _truncated_block_distance(A1, A2, p, mask):
    T1 = rank_truncate(A1, p)
    T2 = rank_truncate(A2, p)
    return float(np.linalg.norm(T1[mask] - T2[mask]))


def position_bootstrap_test(data, S, p, B=500, alpha=0.05, rng=None,
                            rho=1.0, tol=1e-6, K=500):
    """Latent-position bootstrap test on the hypothesis block.

    Statistic: Frobenius distance of the two rank-p truncated mean
    adjacencies over the hypothesis set.  The cutoff comes from B
    parametric bootstrap replications generated from the rank-p null fit
    (equal S-blocks, via :func:`admm_constrained`): gaussian layers use
    the pooled off-S residual variance of the null fit, binary layers
    are Bernoulli draws from the null means clamped into [0, 1].
    p-value is (1 + #{boot >= observed}) / (B + 1).
    """
    if B < 100:
        raise ArgumentError(f"need B >= 100 bootstrap replications, got {B}")
    if rng is None:
        raise ArgumentError("position_bootstrap_test needs an explicit rng")
    n, m = data.n, data.m
    mask = S.mask(n)
    Abar1 = data.sample1.mean_adjacency()
    Abar2 = data.sample2.mean_adjacency()
    observed = _truncated_block_distance(Abar1, Abar2, p, mask)

    fit = admm_constrained(Abar1, Abar2, S, d=p, rho=rho, tol=tol, K=K)
    notes = {"admm_converged": fit.converged, "admm_iterations": fit.iterations}
    binary = data.family.kind == "bernoulli_logit"
    null_means = [fit.theta1, fit.theta2]
    if binary:
        null_means = [np.clip(t, 0.0, 1.0) for t in null_means]
    else:
        off = ~mask
        resid = sum(
            float(((stack.layers - t[None]) ** 2 * off[None]).sum())
            for stack, t in zip((data.sample1, data.sample2), null_means)
        )
        sigma2 = resid / (2.0 * m * off.sum())

    symmetric = not S.directed
    child_rngs = rng.spawn(B)
    exceed = 0
    for child in child_rngs:
        boot_bars = []
        for t in null_means:
            if binary:
                layers = (child.random((m, n, n)) < t[None]).astype(float)
            else:
                layers = t[None] + np.sqrt(sigma2) * child.standard_normal((m, n, n))
            if symmetric:
                iu = np.triu_indices(n, k=1)
                layers[:, iu[1], iu[0]] = layers[:, iu[0], iu[1]]
            boot_bars.append(layers.mean(axis=0))
        if _truncated_block_distance(boot_bars[0], boot_bars[1], p, mask) >= observed:
            exceed += 1
    p_value = (1.0 + exceed) / (B + 1.0)
    ref = RefDist(kind="bootstrap", df=None)
    return TestReport(
        statistic=observed, ref_dist=ref, p_value=float(p_value),
        reject=bool(p_value < alpha), alpha=float(alpha),
        method=f"posn-{p}", effective_dim=int(mask.sum()),
        requested_dim=p, projection_source="bootstrap", notes=notes,
    )


# ---------------------------------------------------------------------------
# Uninformed projections fed to the projection statistics.
# ---------------------------------------------------------------------------

_STAT_FUNCS = {"E": stat_E, "EUD": stat_EUD, "G": stat_G, "GP": stat_GP}


def default_statistic(data):
    """Statistic used when the caller does not pin one: exact-null F for
    gaussian replicates, its m=1 variant, Wald chi-square for binary."""
    if data.family.kind == "gaussian":
        return "GP" if data.m > 1 else "G"
    return "E"


def _run_statistic(statistic, data, S, P, alpha):
    name = default_statistic(data) if statistic is None else statistic
    try:
        func = _STAT_FUNCS[name]
    except KeyError:
        raise ArgumentError(
            f"unknown statistic {name!r}; expected one of {sorted(_STAT_FUNCS)}"
        ) from None
    return func(data, S, P, alpha=alpha)


def random_projection_test(data, S, d, alpha=0.05, rng=None, statistic=None):
    """Projection test with Haar-random projections (no learning stage).

    Rectangle sets draw independent d-dimensional left and right frames;
    other sets draw one d-dimensional frame on the response coordinates.
    Deterministic given the rng state.
    """
    if rng is None:
        raise ArgumentError("random_projection_test needs an explicit rng")
    S_eff = effective_set(S, data.n)
    if S.is_rectangle and S.directed:
        if not 1 <= d <= min(S.r, S.c):
            raise ArgumentError(f"d={d} out of range [1, {min(S.r, S.c)}]")
        P = ProjectionPair(
            U=haar_stiefel(S.r, d, rng), V=haar_stiefel(S.c, d, rng),
            source="random", requested_d=d,
        )
    else:
        p = S_eff.size
        if not 1 <= d <= p:
            raise ArgumentError(f"d={d} out of range [1, {p}]")
        P = ProjectionPair(basis=haar_stiefel(p, d, rng), source="random",
                           requested_d=d)
    report = _run_statistic(statistic, data, S, P, alpha)
    return report


def block_projection_test(data, S, alpha=0.05, statistic=None):
    """Projection test onto the block mean: constant one-dimensional frames.

    For a rectangle the projections are U = 1_r/sqrt(r), V = 1_c/sqrt(c),
    so the working model tracks only the average edge level of the block;
    other sets use the constant direction on their response coordinates.
    """
    if S.is_rectangle and S.directed:
        U = np.full((S.r, 1), 1.0 / np.sqrt(S.r))
        V = np.full((S.c, 1), 1.0 / np.sqrt(S.c))
        P = ProjectionPair(U=U, V=V, source="block", requested_d=1)
    else:
        p = effective_set(S, data.n).size
        P = ProjectionPair(basis=np.full((p, 1), 1.0 / np.sqrt(p)),
                           source="block", requested_d=1)
    return _run_statistic(statistic, data, S, P, alpha)
