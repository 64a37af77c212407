"""Stage I: learn projections from held-out edges.

Everything here obeys one hard rule: **no operation reads edges inside
the hypothesis set**.  Rectangle learning touches only the three
complement blocks (C: same rows, D: complement corner, R: same columns);
imputation masks the hypothesis block out before completing.  The tests
audit this by poisoning hypothesis edges with NaN and checking outputs
stay finite.

Block geometry for a rectangle set S (rows x cols), writing -rows/-cols
for the complements:

    C = (rows,  -cols)    S = (rows,  cols)
    D = (-rows, -cols)    R = (-rows, cols)

The one-step estimator is  T = C_diff @ pinv([D_diff]_d*) @ R_diff,
whose leading singular subspaces estimate those of the S-block
difference.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ArgumentError, NumericalError
from .numkit import svd_thin, rank_truncate, pinv, orthonormal_basis, RANK_REL_TOL
from .netmodel import ProjectionPair, HypothesisSet


@dataclass(frozen=True)
class BlockPartition:
    """Index bookkeeping for the four blocks induced by a rectangle set."""

    rows_in: np.ndarray
    rows_out: np.ndarray
    cols_in: np.ndarray
    cols_out: np.ndarray
    n: int

    @staticmethod
    def from_hypothesis(S, n):
        if not S.is_rectangle:
            raise ArgumentError("block partition requires a rectangle hypothesis set")
        S.validate(n)
        rows_in = np.asarray(S.rows, dtype=int)
        cols_in = np.asarray(S.cols, dtype=int)
        rows_out = np.setdiff1d(np.arange(n), rows_in)
        cols_out = np.setdiff1d(np.arange(n), cols_in)
        return BlockPartition(
            rows_in=rows_in, rows_out=rows_out,
            cols_in=cols_in, cols_out=cols_out, n=n,
        )


@dataclass(frozen=True)
class BlockDiffs:
    """Per-block differences of the two samples' mean adjacency matrices."""

    C: np.ndarray
    D: np.ndarray
    R: np.ndarray


@dataclass(frozen=True)
class SpectralDiag:
    """Scree diagnostics for choosing a projection dimension.

    ``suggested_d`` (largest relative gap in the singular values) is an
    optional hint only; nothing in the package selects a dimension
    automatically.
    """

    singular_values: np.ndarray
    suggested_d: Optional[int] = None
    notes: dict = field(default_factory=dict)

    @staticmethod
    def from_matrix(M, suggest=False):
        s = svd_thin(np.asarray(M, dtype=float)).s
        suggested = elbow_suggestion(s) if suggest else None
        return SpectralDiag(singular_values=s, suggested_d=suggested)


def elbow_suggestion(singular_values, floor=1e-12):
    """Index (1-based dimension) of the largest relative gap s[i]/s[i+1]."""
    s = np.asarray(singular_values, dtype=float)
    s = s[s > floor]
    if s.size < 2:
        return None
    ratios = s[:-1] / s[1:]
    return int(np.argmax(ratios)) + 1


def block_scaling(U_full, held_rows):
    """(rho, kappa) of the held-out block of a full singular-vector matrix.

    rho is the smallest eigenvalue of U_held^T U_held and kappa its
    condition number; reported as diagnostics when true parameters are
    available in simulations.
    """
    U_full = np.asarray(U_full, dtype=float)
    block = U_full[np.asarray(held_rows, dtype=int)]
    evals = np.linalg.eigvalsh(block.T @ block)
    rho = float(evals[0])
    kappa = float(evals[-1] / evals[0]) if evals[0] > 0 else float("inf")
    return rho, kappa


# ---------------------------------------------------------------------------
# Block means and the one-step estimator.
# ---------------------------------------------------------------------------


def _mean_block(stack, rows, cols):
    # mean over layers of one index block; never touches other entries
    sub = stack.layers[np.ix_(np.arange(stack.m), rows, cols)]
    return sub.mean(axis=0)


def block_means(data, part):
    """Differences of per-sample mean adjacency over the C, D, R blocks."""
    if part.rows_out.size == 0 or part.cols_out.size == 0:
        raise ArgumentError(
            "degenerate block partition: the hypothesis rectangle spans "
            "all rows or all columns; use row_hypothesis_projection for "
            "full-row/full-column sets"
        )
    diffs = {}
    for name, rows, cols in (
        ("C", part.rows_in, part.cols_out),
        ("D", part.rows_out, part.cols_out),
        ("R", part.rows_out, part.cols_in),
    ):
        diffs[name] = _mean_block(data.sample1, rows, cols) - _mean_block(
            data.sample2, rows, cols
        )
    return BlockDiffs(**diffs)


def one_step_T(blocks, d_star):
    """One-step estimate of the S-block difference from complement blocks.

    T_hat = C @ pinv([D]_(d_star)) @ R.  Rank is bounded by d_star.
    """
    if d_star < 1:
        raise ArgumentError(f"d_star must be >= 1, got {d_star}")
    d_eff = min(d_star, *blocks.D.shape)
    D_trunc = rank_truncate(blocks.D, d_eff)
    if not np.any(np.abs(D_trunc) > 0):
        raise NumericalError(
            "degenerate signal: rank-truncated D block is zero, the "
            "held-out difference carries no usable structure",
            d_star=d_star,
        )
    return blocks.C @ pinv(D_trunc) @ blocks.R


def logit_transform_trim(mean_adjacency, m, bound="third"):
    """Map edge frequencies to the natural-parameter scale, with trimming.

    Frequencies are clamped into [eps, 1 - eps] before the logit, where
    eps = 1/(3m) (``bound='third'``) or 1/m (``bound='unit'``), so empty
    and full cells stay finite.
    """
    if m < 1:
        raise ArgumentError(f"m must be >= 1, got {m}")
    M = np.asarray(mean_adjacency, dtype=float)
    if np.nanmin(M) < 0.0 or np.nanmax(M) > 1.0:
        raise ArgumentError("mean adjacency entries must lie in [0, 1]")
    if bound == "third":
        eps = 1.0 / (3.0 * m)
    elif bound == "unit":
        eps = 1.0 / m
    else:
        raise ArgumentError(f"unknown trim bound {bound!r}; expected 'third' or 'unit'")
    clipped = np.clip(M, eps, 1.0 - eps)
    return np.log(clipped) - np.log1p(-clipped)


def _linked_blocks(data, part, d, trim):
    """Logit-path block differences: trimmed linked means, truncated to rank d.

    The truncation is applied per sample and per block; truncating the
    full matrix would read hypothesis-set edges.
    """
    diffs = {}
    for name, rows, cols in (
        ("C", part.rows_in, part.cols_out),
        ("D", part.rows_out, part.cols_out),
        ("R", part.rows_out, part.cols_in),
    ):
        ests = []
        for stack in (data.sample1, data.sample2):
            linked = logit_transform_trim(_mean_block(stack, rows, cols), data.m, trim)
            ests.append(rank_truncate(linked, min(d, *linked.shape)))
        diffs[name] = ests[0] - ests[1]
    return BlockDiffs(**diffs)


def learn_projections_rect(data, S, d, d_star=None, trim="third"):
    """Learn (U, V) from the one-step estimator on a rectangle set.

    Gaussian data uses raw block means; binary data first moves block
    means to the natural-parameter scale (trimmed logit, per-sample
    rank-d denoising).  ``d_star`` is the D-block truncation rank and
    defaults to ``d``.

    If T_hat has numerical rank below ``d`` the basis is padded from the
    remaining singular vectors and the pair is flagged ``padded``.
    """
    part = BlockPartition.from_hypothesis(S, data.n)
    if not 1 <= d <= min(S.r, S.c):
        raise ArgumentError(f"d={d} out of range [1, {min(S.r, S.c)}]")
    if data.family.kind == "bernoulli_logit":
        blocks = _linked_blocks(data, part, d, trim)
    else:
        blocks = block_means(data, part)
    T_hat = one_step_T(blocks, d if d_star is None else d_star)
    res = svd_thin(T_hat)
    padded = res.rank() < d
    return ProjectionPair(
        U=res.U[:, :d].copy(), V=res.V[:, :d].copy(),
        source="learned-rect", padded=padded, requested_d=d,
    )


def rect_spectral_diag(data, S, d_star, trim="third"):
    """Scree of the one-step estimator T_hat (held-out edges only)."""
    part = BlockPartition.from_hypothesis(S, data.n)
    if data.family.kind == "bernoulli_logit":
        blocks = _linked_blocks(data, part, d_star, trim)
    else:
        blocks = block_means(data, part)
    T_hat = one_step_T(blocks, d_star)
    return SpectralDiag.from_matrix(T_hat, suggest=True)


# ---------------------------------------------------------------------------
# Matrix completion path.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImputeResult:
    """Rank-d completion of a partially observed matrix."""

    matrix: np.ndarray
    converged: bool
    iterations: int
    objective: float  # Frobenius residual on observed entries at the final iterate


def hard_impute(M, observed, d, max_iter=500, tol=1e-7):
    """Alternating rank-truncation completion of a masked matrix.

    Missing entries start at zero; each sweep rank-d-truncates the filled
    matrix and restores observed entries.  Stops when the relative change
    of the low-rank iterate drops below ``tol``.  The observed-entry
    residual is non-increasing across sweeps.  On hitting ``max_iter``
    the best iterate is returned with ``converged=False``.

    When the missing entries form one contiguous block and ``d`` exceeds
    the signal rank, the zero-filled block is itself nearly representable
    at rank ``d`` and the sweeps stall close to that spurious fixed
    point; keep ``d`` at or below the expected rank of the difference.
    """
    M = np.asarray(M, dtype=float)
    observed = np.asarray(observed, dtype=bool)
    if M.shape != observed.shape:
        raise ArgumentError("matrix and observation mask shapes differ")
    if not observed.any():
        raise ArgumentError("observation mask is empty; nothing to impute from")
    if not 1 <= d <= min(M.shape):
        raise ArgumentError(f"imputation rank d={d} out of range for shape {M.shape}")
    filled = np.where(observed, M, 0.0)
    Z = np.zeros_like(filled)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        Z_new = rank_truncate(filled, d)
        delta = np.linalg.norm(Z_new - Z)
        scale = max(1.0, np.linalg.norm(Z))
        Z = Z_new
        filled = np.where(observed, M, Z)
        if delta / scale < tol:
            converged = True
            break
    resid = float(np.linalg.norm(np.where(observed, M - Z, 0.0)))
    return ImputeResult(matrix=Z, converged=converged, iterations=it, objective=resid)


def _masked_difference(data, S, trim):
    """Difference of (possibly linked) mean adjacencies with S blanked out.

    Hypothesis-set entries are replaced by zero *before* any arithmetic
    that could propagate them.
    """
    hyp = S.mask(data.n)
    observed = ~hyp
    means = []
    for stack in (data.sample1, data.sample2):
        M = stack.mean_adjacency()
        M = np.where(observed, M, 0.0)  # blank held-in entries immediately
        if data.family.kind == "bernoulli_logit":
            M = np.where(observed, logit_transform_trim(np.where(observed, M, 0.5), data.m, trim), 0.0)
        means.append(M)
    return means[0] - means[1], observed


def _completed_difference(data, S, d, center, trim, max_iter, tol):
    diff, observed = _masked_difference(data, S, trim)
    if center:
        diff = np.where(observed, diff - diff[observed].mean(), 0.0)
    return hard_impute(diff, observed, d, max_iter=max_iter, tol=tol)


def learn_projections_impute(data, S, d, center=False, trim="third",
                             max_iter=500, tol=1e-7):
    """Learn (U, V) by rank-d completion of the held-out mean difference.

    The difference matrix (linked scale for binary data) is completed
    with the hypothesis block treated as missing; the projections are the
    leading singular subspaces of the completed difference restricted to
    the hypothesis rows/columns.  ``center=True`` removes the global mean
    of the observed difference entries first (useful when group-specific
    intercepts are plausible).
    """
    if not S.is_rectangle:
        raise ArgumentError(
            "learn_projections_impute needs a rectangle set; for general "
            "sets learn full-matrix bases with learn_full_bases"
        )
    S.validate(data.n)
    if not 1 <= d <= min(S.r, S.c):
        raise ArgumentError(f"d={d} out of range [1, {min(S.r, S.c)}]")
    result = _completed_difference(data, S, d, center, trim, max_iter, tol)
    block = result.matrix[np.ix_(S.rows, S.cols)]
    res = svd_thin(block)
    if res.s.size == 0 or res.s[0] <= 1e-11 * max(1.0, float(np.abs(result.matrix).max())):
        raise NumericalError(
            "degenerate signal: completed difference carries no usable "
            "structure on the hypothesis block"
        )
    padded = res.rank() < d
    return ProjectionPair(
        U=res.U[:, :d].copy(), V=res.V[:, :d].copy(),
        source="learned-impute", padded=padded, requested_d=d,
    )


def impute_spectral_diag(data, S, d, center=False, trim="third",
                         max_iter=500, tol=1e-7):
    """Scree of the completed difference restricted to the hypothesis block."""
    if not S.is_rectangle:
        raise ArgumentError("impute_spectral_diag needs a rectangle set")
    S.validate(data.n)
    result = _completed_difference(data, S, d, center, trim, max_iter, tol)
    block = result.matrix[np.ix_(S.rows, S.cols)]
    return SpectralDiag.from_matrix(block, suggest=True)


def learn_full_bases(data, S, d, center=False, trim="third", max_iter=500, tol=1e-7):
    """Full-matrix left/right bases (n x d each) from the completed difference.

    Supports general and undirected hypothesis sets: feed the left basis
    to :func:`mesonet.netmodel.undirected_projection_basis` (symmetric
    data) or both to :func:`mesonet.netmodel.general_projection_basis`.
    """
    S.validate(data.n)
    if not 1 <= d <= data.n:
        raise ArgumentError(f"d={d} out of range [1, {data.n}]")
    diff, observed = _masked_difference(data, S, trim)
    if center:
        diff = np.where(observed, diff - diff[observed].mean(), 0.0)
    result = hard_impute(diff, observed, d, max_iter=max_iter, tol=tol)
    res = svd_thin(result.matrix)
    if res.s.size == 0 or res.s[0] <= 1e-11:
        raise NumericalError(
            "degenerate signal: completed difference is numerically zero"
        )
    diag = SpectralDiag(singular_values=res.s, suggested_d=elbow_suggestion(res.s))
    return res.U[:, :d].copy(), res.V[:, :d].copy(), diag


# ---------------------------------------------------------------------------
# Basis corrections and the full-row special case.
# ---------------------------------------------------------------------------


def _reorthonormalize(M, context):
    # corrections start from orthonormal columns, so anything surviving has
    # norm near one; what remains below this floor is projection residue
    if np.linalg.norm(M) < 1e-10:
        raise NumericalError(
            f"{context}: basis collapsed to the empty space after correction"
        )
    try:
        return orthonormal_basis(M)
    except ArgumentError:
        raise NumericalError(
            f"{context}: basis collapsed to the empty space after correction"
        ) from None


def density_correct(P):
    """Center the projections so the working model ignores global density.

    Kronecker pairs are centered side by side (each side may lose one
    dimension); a general basis is orthogonalized against the constant
    vector.  Either way the corrected basis is orthogonal to the all-ones
    direction, so a uniform shift of either sample's hypothesis block
    cannot move the statistic.
    """
    if P.is_kronecker:
        U, V = P.U, P.V
        Uc = _reorthonormalize(U - U.mean(axis=0, keepdims=True), "density_correct(U)")
        Vc = _reorthonormalize(V - V.mean(axis=0, keepdims=True), "density_correct(V)")
        return ProjectionPair(U=Uc, V=Vc, source=P.source + "+density")
    B = P.basis
    Bc = _reorthonormalize(B - B.mean(axis=0, keepdims=True), "density_correct(basis)")
    return ProjectionPair(basis=Bc, source=P.source + "+density")


def _degree_directions(pairs, directed):
    """Columns spanning additive row/column (or symmetric node) effects."""
    k = pairs.shape[0]
    if directed:
        rows, row_idx = np.unique(pairs[:, 0], return_inverse=True)
        cols, col_idx = np.unique(pairs[:, 1], return_inverse=True)
        D = np.zeros((k, rows.size + cols.size))
        D[np.arange(k), row_idx] = 1.0
        D[np.arange(k), rows.size + col_idx] = 1.0
        return D
    nodes, _ = np.unique(pairs, return_inverse=True)
    lookup = {int(v): i for i, v in enumerate(nodes)}
    D = np.zeros((k, nodes.size))
    for a, (i, j) in enumerate(pairs):
        D[a, lookup[int(i)]] += 1.0
        D[a, lookup[int(j)]] += 1.0
    return D


def degree_correct(P, S=None):
    """Orthogonalize the working basis against additive degree effects.

    Degree effects (row plus column constants on the hypothesis block)
    span r + c - 1 directions; removing them generally breaks Kronecker
    structure, so the result is always a general-basis pair.  For a
    Kronecker input the block's local coordinates suffice; a general
    basis needs its hypothesis set to know which response coordinate
    belongs to which row/column.
    """
    if P.is_kronecker:
        r, c = P.U.shape[0], P.V.shape[0]
        i = np.tile(np.arange(r), c)
        j = np.repeat(np.arange(c), r)
        pairs = np.column_stack([i, j])  # column-major order of the block
        directed = True
    else:
        if S is None:
            raise ArgumentError(
                "degree_correct on a general basis needs the hypothesis set"
            )
        pairs = S.canonical_pairs()
        if not S.directed:
            # the basis lives on the on-or-above-diagonal representatives
            pairs = pairs[pairs[:, 0] <= pairs[:, 1]]
        if pairs.shape[0] != P.basis.shape[0]:
            raise ArgumentError(
                "hypothesis set size does not match the basis row count"
            )
        directed = S.directed
    K = P.design_block()
    Dg = _degree_directions(pairs, directed)
    Q = orthonormal_basis(Dg)
    K_perp = K - Q @ (Q.T @ K)
    basis = _reorthonormalize(K_perp, "degree_correct")
    return ProjectionPair(basis=basis, source=P.source + "+degree")


def row_hypothesis_projection(data, S_row, d_star, trim="third"):
    """Projections for a full-row (or full-column) hypothesis set.

    A single row leaves no corner blocks to form the one-step estimator;
    instead the right projection is estimated directly as the leading
    right singular subspace of the complement-row mean difference (the
    transposed picture for a full column).  The same-side projection is
    the trivial [1].
    """
    if not S_row.is_rectangle:
        raise ArgumentError("row_hypothesis_projection needs a rectangle set")
    S_row.validate(data.n)
    n = data.n
    full_row = S_row.r == 1 and S_row.c == n
    full_col = S_row.c == 1 and S_row.r == n
    if not (full_row or full_col):
        raise ArgumentError(
            "row_hypothesis_projection applies only to a full row (r=1, c=n) "
            "or full column (c=1, r=n) hypothesis set"
        )
    if full_row:
        rows = np.setdiff1d(np.arange(n), S_row.rows)
        cols = np.arange(n)
    else:
        rows = np.arange(n)
        cols = np.setdiff1d(np.arange(n), S_row.cols)
    if data.family.kind == "bernoulli_logit":
        diff = logit_transform_trim(
            _mean_block(data.sample1, rows, cols), data.m, trim
        ) - logit_transform_trim(_mean_block(data.sample2, rows, cols), data.m, trim)
    else:
        diff = _mean_block(data.sample1, rows, cols) - _mean_block(data.sample2, rows, cols)
    res = svd_thin(diff)
    if res.s.size == 0 or res.s[0] <= RANK_REL_TOL:
        raise NumericalError(
            "degenerate signal: complement-block difference is numerically zero"
        )
    if not 1 <= d_star <= min(diff.shape):
        raise ArgumentError(f"d_star={d_star} out of range for block shape {diff.shape}")
    padded = res.rank() < d_star
    one = np.ones((1, 1))
    if full_row:
        return ProjectionPair(
            U=one, V=res.V[:, :d_star].copy(),
            source="learned-row", padded=padded, requested_d=d_star,
        )
    return ProjectionPair(
        U=res.U[:, :d_star].copy(), V=one,
        source="learned-row", padded=padded, requested_d=d_star,
    )
