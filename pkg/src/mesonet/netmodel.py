"""Data types for network samples, hypothesis sets, and design maps.

Conventions fixed here and shared by every other module:

* ``vec`` is **column-major** (Fortran order), so that
  ``vec(U X V^T) = (V kron U) vec(X)``.
* Node indices are 0-based inside the library; the CLI converts from the
  1-based convention used in its input files.
* For a rectangle hypothesis set the response coordinates follow the
  column-major vec of the extracted block, in the caller's row/column
  order.  For a general (pair list) set they follow the canonical pair
  order: pairs sorted lexicographically by (row, col).  A general-basis
  ``ProjectionPair`` is always expressed in the response coordinates of
  its hypothesis set.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

from .errors import ArgumentError
from .numkit import orthonormal_basis

_ORTHO_TOL = 1e-10


# ---------------------------------------------------------------------------
# Edge families.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EdgeFamily:
    """Exponential-family edge model: inverse link and its derivative.

    ``h`` maps the natural parameter to the edge mean and must be strictly
    increasing; ``h_prime`` is its derivative (the variance function at
    unit dispersion); ``h_inv`` inverts ``h`` on its range.
    """

    kind: str
    h: Callable[[np.ndarray], np.ndarray]
    h_prime: Callable[[np.ndarray], np.ndarray]
    h_inv: Callable[[np.ndarray], np.ndarray]
    var_from_mean: Callable[[np.ndarray], np.ndarray]
    dispersion_known: bool

    def __repr__(self):
        return f"EdgeFamily({self.kind!r})"


def _expit_prime(x):
    p = special.expit(x)
    return p * (1.0 - p)


GAUSSIAN = EdgeFamily(
    kind="gaussian",
    h=lambda x: np.asarray(x, dtype=float),
    h_prime=lambda x: np.ones_like(np.asarray(x, dtype=float)),
    h_inv=lambda y: np.asarray(y, dtype=float),
    var_from_mean=lambda mu: np.ones_like(np.asarray(mu, dtype=float)),
    dispersion_known=False,
)

BERNOULLI_LOGIT = EdgeFamily(
    kind="bernoulli_logit",
    h=special.expit,
    h_prime=_expit_prime,
    h_inv=special.logit,
    var_from_mean=lambda mu: np.asarray(mu, dtype=float) * (1.0 - np.asarray(mu, dtype=float)),
    dispersion_known=True,
)

_FAMILIES = {
    "gaussian": GAUSSIAN,
    "bernoulli_logit": BERNOULLI_LOGIT,
    "logit": BERNOULLI_LOGIT,  # the short name used on the command line
}


def family_by_name(name):
    try:
        return _FAMILIES[name]
    except KeyError:
        raise ArgumentError(
            f"unknown edge family {name!r}; expected one of {sorted(_FAMILIES)}"
        ) from None


# ---------------------------------------------------------------------------
# Network containers.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NetworkStack:
    """``m`` aligned n x n adjacency matrices from one sample, as an (m, n, n) array."""

    layers: np.ndarray

    def __post_init__(self):
        layers = np.asarray(self.layers, dtype=float)
        if layers.ndim != 3 or layers.shape[1] != layers.shape[2]:
            raise ArgumentError(
                f"layers must have shape (m, n, n), got {layers.shape}"
            )
        if layers.shape[0] < 1 or layers.shape[1] < 1:
            raise ArgumentError("need at least one layer and one node")
        object.__setattr__(self, "layers", layers)

    @property
    def m(self):
        return self.layers.shape[0]

    @property
    def n(self):
        return self.layers.shape[1]

    def mean_adjacency(self):
        return self.layers.mean(axis=0)


@dataclass(frozen=True)
class TwoSampleData:
    """Two independent samples of aligned networks under a shared edge family."""

    sample1: NetworkStack
    sample2: NetworkStack
    family: EdgeFamily

    def __post_init__(self):
        if self.sample1.n != self.sample2.n:
            raise ArgumentError(
                f"samples disagree on node count: {self.sample1.n} vs {self.sample2.n}"
            )
        if self.sample1.m != self.sample2.m:
            raise ArgumentError(
                f"samples disagree on layer count: {self.sample1.m} vs {self.sample2.m}"
            )
        if self.family.kind == "bernoulli_logit":
            for name, stack in (("sample1", self.sample1), ("sample2", self.sample2)):
                vals = stack.layers
                if not np.all((vals == 0.0) | (vals == 1.0)):
                    raise ArgumentError(
                        f"{name} has non-binary entries under the bernoulli_logit family"
                    )

    @property
    def n(self):
        return self.sample1.n

    @property
    def m(self):
        return self.sample1.m


# ---------------------------------------------------------------------------
# Hypothesis sets.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HypothesisSet:
    """A fixed set of node pairs whose edge parameters are compared.

    Two shapes: a rectangle (row index list x column index list, the fast
    path) or a general pair list.  ``directed=False`` declares that the
    set is symmetric-closed and the tests should work on its
    on-or-above-diagonal restriction.  ``include_diagonal=False`` rejects
    diagonal pairs at validation time.
    """

    rows: Optional[np.ndarray] = None
    cols: Optional[np.ndarray] = None
    _pairs: Optional[np.ndarray] = None
    directed: bool = True
    include_diagonal: bool = True

    # -- constructors --------------------------------------------------

    @staticmethod
    def rectangle(rows, cols, directed=True, include_diagonal=True):
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        if rows.ndim != 1 or cols.ndim != 1 or rows.size == 0 or cols.size == 0:
            raise ArgumentError("rectangle needs non-empty 1-d row and column index lists")
        if np.unique(rows).size != rows.size or np.unique(cols).size != cols.size:
            raise ArgumentError("rectangle index lists must not contain duplicates")
        # index lists are sets; keep them sorted so response coordinates
        # and canonical pair order always agree
        return HypothesisSet(
            rows=np.sort(rows), cols=np.sort(cols),
            directed=directed, include_diagonal=include_diagonal,
        )

    @staticmethod
    def general(pairs, directed=True, include_diagonal=True):
        pairs = np.asarray(pairs, dtype=int)
        if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] == 0:
            raise ArgumentError("general set needs a non-empty (k, 2) pair array")
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        pairs = pairs[order]
        if np.any(np.all(pairs[1:] == pairs[:-1], axis=1)):
            raise ArgumentError("general set contains duplicate pairs")
        return HypothesisSet(
            _pairs=pairs, directed=directed, include_diagonal=include_diagonal
        )

    # -- shape queries ---------------------------------------------------

    @property
    def is_rectangle(self):
        return self.rows is not None

    @property
    def r(self):
        if not self.is_rectangle:
            raise ArgumentError("r is only defined for rectangle hypothesis sets")
        return int(self.rows.size)

    @property
    def c(self):
        if not self.is_rectangle:
            raise ArgumentError("c is only defined for rectangle hypothesis sets")
        return int(self.cols.size)

    @property
    def size(self):
        if self.is_rectangle:
            return self.r * self.c
        return int(self._pairs.shape[0])

    def canonical_pairs(self):
        """All pairs of the set, sorted lexicographically by (row, col)."""
        if self.is_rectangle:
            rr = np.sort(self.rows)
            cc = np.sort(self.cols)
            i = np.repeat(rr, cc.size)
            j = np.tile(cc, rr.size)
            return np.column_stack([i, j])
        return self._pairs.copy()

    def validate(self, n):
        """Check all indices are inside an n-node network, plus flags."""
        pairs = self.canonical_pairs()
        if pairs.min() < 0 or pairs.max() >= n:
            raise ArgumentError(
                f"hypothesis set indices out of range for n={n}: "
                f"min {pairs.min()}, max {pairs.max()}"
            )
        if not self.include_diagonal and np.any(pairs[:, 0] == pairs[:, 1]):
            raise ArgumentError("hypothesis set contains diagonal pairs but include_diagonal=False")
        if not self.directed:
            seen = {(int(i), int(j)) for i, j in pairs}
            missing = [(i, j) for (i, j) in seen if (j, i) not in seen]
            if missing:
                raise ArgumentError(
                    f"undirected hypothesis set is not symmetric-closed; e.g. missing {missing[0][::-1]}"
                )

    def mask(self, n):
        """Boolean n x n matrix, True on the hypothesis set."""
        self.validate(n)
        out = np.zeros((n, n), dtype=bool)
        if self.is_rectangle:
            out[np.ix_(self.rows, self.cols)] = True
        else:
            out[self._pairs[:, 0], self._pairs[:, 1]] = True
        return out


# ---------------------------------------------------------------------------
# Projection pairs.
# ---------------------------------------------------------------------------


def _check_orthonormal(M, name):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[1] < 1:
        raise ArgumentError(f"{name} must be a matrix with at least one column")
    if M.shape[1] > M.shape[0]:
        raise ArgumentError(f"{name} has more columns than rows ({M.shape})")
    gram = M.T @ M
    if np.max(np.abs(gram - np.eye(M.shape[1]))) > _ORTHO_TOL:
        raise ArgumentError(f"{name} columns are not orthonormal within {_ORTHO_TOL}")
    return M


@dataclass(frozen=True)
class ProjectionPair:
    """Stage-I output: orthonormal left/right bases, or one general basis.

    Kronecker form holds ``U`` (r x d_r) and ``V`` (c x d_c) for rectangle
    sets.  General form holds a single orthonormal ``basis`` whose rows
    follow the response coordinates of the hypothesis set it was built
    for.  ``source`` records provenance for reports; ``padded`` flags a
    basis that was padded past the numerical rank of the learning target.
    """

    U: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None
    basis: Optional[np.ndarray] = None
    source: str = "user"
    padded: bool = False
    requested_d: Optional[int] = None

    def __post_init__(self):
        has_uv = self.U is not None or self.V is not None
        if has_uv == (self.basis is not None):
            raise ArgumentError("supply either (U, V) or basis, not both")
        if self.basis is not None:
            object.__setattr__(self, "basis", _check_orthonormal(self.basis, "basis"))
        else:
            if self.U is None or self.V is None:
                raise ArgumentError("Kronecker form needs both U and V")
            object.__setattr__(self, "U", _check_orthonormal(self.U, "U"))
            object.__setattr__(self, "V", _check_orthonormal(self.V, "V"))

    @property
    def is_kronecker(self):
        return self.basis is None

    @property
    def q(self):
        """Number of working-model coefficients per group."""
        if self.is_kronecker:
            return self.U.shape[1] * self.V.shape[1]
        return self.basis.shape[1]

    def design_block(self):
        """The p x q block B entering the design: V kron U, or the general basis."""
        if self.is_kronecker:
            return np.kron(self.V, self.U)
        return self.basis

    def with_source(self, source):
        return ProjectionPair(
            U=self.U, V=self.V, basis=self.basis, source=source,
            padded=self.padded, requested_d=self.requested_d,
        )


def identity_pair(S, source="identity"):
    """Full-dimensional projections: the working model is saturated."""
    if S.is_rectangle:
        return ProjectionPair(U=np.eye(S.r), V=np.eye(S.c), source=source)
    return ProjectionPair(basis=np.eye(S.size), source=source)


# ---------------------------------------------------------------------------
# Response and design construction.
# ---------------------------------------------------------------------------


def vec(M):
    """Column-major vectorization."""
    return np.asarray(M).reshape(-1, order="F")


def unvec(v, rows, cols):
    """Inverse of :func:`vec`."""
    return np.asarray(v).reshape((rows, cols), order="F")


def effective_set(S, n):
    """The set the working GLM actually runs on.

    Directed sets are used as-is; undirected sets are restricted to their
    on-or-above-diagonal representatives (the lower triangle duplicates
    them and would break edge independence).
    """
    if S.directed:
        return S
    _, _, s_upper = symmetry_maps(S, n)
    return s_upper


def _extract(layers, S):
    """(m, p) matrix of response coordinates per layer for a directed set."""
    if S.is_rectangle:
        block = layers[np.ix_(np.arange(layers.shape[0]), S.rows, S.cols)]
        # column-major vec of each r x c block
        return block.transpose(0, 2, 1).reshape(layers.shape[0], -1)
    pairs = S.canonical_pairs()
    return layers[:, pairs[:, 0], pairs[:, 1]]


def build_response(data, S):
    """Response matrix Y: (2p x m), column k stacks both samples' S-edges of layer k.

    ``p`` is the response dimension of the effective (directed) set:
    ``r*c`` for rectangles, the pair count otherwise.
    """
    S_eff = effective_set(S, data.n)
    S_eff.validate(data.n)
    y1 = _extract(data.sample1.layers, S_eff)
    y2 = _extract(data.sample2.layers, S_eff)
    return np.vstack([y1.T, y2.T])


def build_design(P, m):
    """Full GLM design: 1_m kron [[B, B], [B, -B]] with B the projection block."""
    if m < 1:
        raise ArgumentError(f"need m >= 1 layers, got {m}")
    B = P.design_block()
    xbar = np.block([[B, B], [B, -B]])
    return np.tile(xbar, (m, 1))


def design_layer_block(P):
    """One-layer design block [[B, B], [B, -B]] (the full design is its m-fold stack)."""
    B = P.design_block()
    return np.block([[B, B], [B, -B]])


def selection_map(S, n):
    """0/1 selection matrix extracting S's vec entries in canonical pair order.

    Row k of the result selects the column-major vec index of the k-th
    canonical pair.  Dense; meant for moderate |S| * n^2.
    """
    S.validate(n)
    pairs = S.canonical_pairs()
    flat = pairs[:, 0] + n * pairs[:, 1]
    if np.unique(flat).size != flat.size:
        raise ArgumentError("hypothesis set contains duplicate pairs")
    out = np.zeros((pairs.shape[0], n * n))
    out[np.arange(pairs.shape[0]), flat] = 1.0
    return out


def symmetry_maps(S, n):
    """Duplication maps for undirected sets.

    Returns ``(G, G_pinv, S_upper)`` where ``S_upper`` keeps one
    representative per symmetric pair (the on-or-above-diagonal one) and
    ``G`` expands upper coordinates back to the full set:
    ``pi_S vec(M) = G @ pi_upper vec(M)`` for symmetric M, with
    ``G_pinv @ G = I``.
    """
    if S.directed:
        raise ArgumentError("symmetry_maps needs an undirected hypothesis set")
    S.validate(n)
    pairs = S.canonical_pairs()
    upper = pairs[pairs[:, 0] <= pairs[:, 1]]
    key = {(int(i), int(j)): k for k, (i, j) in enumerate(upper)}
    G = np.zeros((pairs.shape[0], upper.shape[0]))
    for k, (i, j) in enumerate(pairs):
        G[k, key[(int(min(i, j)), int(max(i, j)))]] = 1.0
    counts = G.sum(axis=0)
    G_pinv = (G / counts).T
    s_upper = HypothesisSet.general(
        upper, directed=True, include_diagonal=S.include_diagonal
    )
    return G, G_pinv, s_upper


def _kron_rows(Ubar, Vbar, pairs):
    """Rows of (Vbar kron Ubar) at the vec indices of ``pairs``.

    Row for pair (i, j) is outer(Vbar[j], Ubar[i]) flattened C-order,
    matching np.kron's column ordering.  Avoids forming the n^2-row
    Kronecker product.
    """
    left = Vbar[pairs[:, 1]]
    right = Ubar[pairs[:, 0]]
    return (left[:, :, None] * right[:, None, :]).reshape(pairs.shape[0], -1)


def undirected_projection_basis(Ubar, S, n=None):
    """Orthonormal working basis for an undirected set from a full-matrix basis.

    Implements the symmetric working model: the basis spans
    col{G_pinv @ pi_S @ (Ubar kron Ubar)} over the upper-representative
    coordinates.  Its column count is the numerical rank, which can fall
    below d^2.
    """
    Ubar = _check_orthonormal(np.asarray(Ubar, dtype=float), "Ubar")
    n = Ubar.shape[0] if n is None else n
    if Ubar.shape[0] != n:
        raise ArgumentError(f"Ubar has {Ubar.shape[0]} rows, expected n={n}")
    _, G_pinv, _ = symmetry_maps(S, n)
    rows = _kron_rows(Ubar, Ubar, S.canonical_pairs())
    return orthonormal_basis(G_pinv @ rows)


def general_projection_basis(Ubar, Vbar, S, n=None):
    """Orthonormal working basis for a directed general set from full-matrix bases.

    Spans col{pi_S @ (Vbar kron Ubar)} in canonical pair order.
    """
    Ubar = _check_orthonormal(np.asarray(Ubar, dtype=float), "Ubar")
    Vbar = _check_orthonormal(np.asarray(Vbar, dtype=float), "Vbar")
    n = Ubar.shape[0] if n is None else n
    if Ubar.shape[0] != n or Vbar.shape[0] != n:
        raise ArgumentError("Ubar and Vbar must both have n rows")
    S.validate(n)
    rows = _kron_rows(Ubar, Vbar, S.canonical_pairs())
    return orthonormal_basis(rows)
