"""Subspaces of R^{2N}: frames, angles, cones, graph charts, volume ratios.

A subspace is stored as a column-orthonormal frame, which stays valid
everywhere on the Grassmannian; the graph chart over the x block is a
derived view that exists only when the subspace is transversal to the y
block. Frames produced here follow a positive-diagonal QR convention so
results are reproducible across runs and backends.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    ConeDegeneracyError,
    ConfigError,
    DegenerateSubspaceError,
    NotAGraphError,
)

# condition number of the x block beyond which a subspace is not a graph
GRAPH_COND_LIMIT = 1e12

# angles smaller than this are reported as exactly zero
ANGLE_FLOOR = 1e-8


@dataclass(frozen=True)
class SubspaceFrame:
    """k-plane in R^{ambient_dim} spanned by orthonormal columns."""

    cols: np.ndarray
    ambient_dim: int

    @property
    def k(self):
        return self.cols.shape[1]


@dataclass(frozen=True)
class GraphRep:
    """Chart of an N-plane transversal to the y block: y = G x."""

    G: np.ndarray


@dataclass(frozen=True)
class JordanAngles:
    """Principal angles between two k-planes, nondecreasing in [0, pi/2]."""

    psi: np.ndarray

    def max(self):
        return float(self.psi[-1])


def orthonormalize(raw):
    """Frame with the same column span as raw.

    Reduced QR with the signs flipped so the R diagonal is positive. Raises
    a degenerate-subspace error when the smallest singular value falls
    below 1e-12 of the largest.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] < raw.shape[1]:
        raise ConfigError(f"expected a tall 2D matrix, got shape {raw.shape}")
    svals = np.linalg.svd(raw, compute_uv=False)
    if svals[0] == 0.0 or svals[-1] < 1e-12 * svals[0]:
        raise DegenerateSubspaceError(
            f"columns are numerically rank-deficient "
            f"(singular values {svals[0]:.3e} .. {svals[-1]:.3e})"
        )
    q, r = np.linalg.qr(raw)
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    return SubspaceFrame(cols=q * signs, ambient_dim=raw.shape[0])


def frame_from_graph(G):
    """Orthonormal frame of graph(G) = {(u, G u)}."""
    G = G.G if isinstance(G, GraphRep) else np.asarray(G, dtype=np.float64)
    n = G.shape[0]
    raw = np.vstack([np.eye(n), G])
    return orthonormalize(raw)


def _check_pair(E, F):
    if E.ambient_dim != F.ambient_dim or E.k != F.k:
        raise ConfigError(
            f"frames must match in shape, got {E.cols.shape} vs {F.cols.shape}"
        )


def principal_angles(E, F):
    """Angles arccos sigma_i(E^T F), clamped and sorted nondecreasing."""
    _check_pair(E, F)
    sig = np.linalg.svd(E.cols.T @ F.cols, compute_uv=False)
    sig = np.clip(sig, 0.0, 1.0)
    psi = np.arccos(sig)
    psi[psi < ANGLE_FLOOR] = 0.0
    return JordanAngles(psi=np.sort(psi))


def d_hausdorff(E, F):
    """sin of the largest principal angle, computed as the projector gap.

    The cosine route sin(arccos sigma) loses half the digits near zero, so
    the value comes from the sine form |(I - Pi_F) Pi_E| directly; gaps
    below the angle floor collapse to exactly 0.
    """
    _check_pair(E, F)
    resid = E.cols - F.cols @ (F.cols.T @ E.cols)
    gap = float(np.linalg.norm(resid, ord=2))
    if gap < ANGLE_FLOOR:
        return 0.0
    return min(gap, 1.0)


def d_geodesic(E, F):
    """Euclidean length of the principal-angle vector."""
    return float(np.linalg.norm(principal_angles(E, F).psi))


def _split_blocks(frame, axis):
    n = frame.ambient_dim // 2
    if axis == "x":
        return frame.cols[:n], frame.cols[n:]
    if axis == "y":
        return frame.cols[n:], frame.cols[:n]
    raise ConfigError(f"axis must be 'x' or 'y', got {axis!r}")


def cone_membership(E, alpha, axis="x"):
    """Whether E lies in the alpha-cone around the chosen coordinate block.

    True iff E is a graph over the block with slope norm at most alpha;
    subspaces that fail to be graphs are outside every cone.
    """
    if float(alpha) <= 0.0:
        raise ConfigError(f"alpha must be positive, got {alpha}")
    n = E.ambient_dim // 2
    if E.k != n:
        raise ConfigError(f"cone test needs k = N = {n}, got k = {E.k}")
    x_blk, y_blk = _split_blocks(E, axis)
    sx = np.linalg.svd(x_blk, compute_uv=False)
    if sx[-1] == 0.0 or sx[0] / sx[-1] > GRAPH_COND_LIMIT:
        return False
    slope = y_blk @ np.linalg.inv(x_blk)
    return bool(np.linalg.norm(slope, ord=2) <= float(alpha))


def graph_from_frame(E):
    """Chart G with graph(G) = span(E); requires transversality to R^y."""
    n = E.ambient_dim // 2
    if E.k != n:
        raise ConfigError(f"graph chart needs k = N = {n}, got k = {E.k}")
    x_blk, y_blk = _split_blocks(E, "x")
    sx = np.linalg.svd(x_blk, compute_uv=False)
    if sx[-1] == 0.0 or sx[0] / sx[-1] > GRAPH_COND_LIMIT:
        raise NotAGraphError(
            "subspace is not a graph over the x block "
            f"(x-block condition {sx[0]:.3e}/{sx[-1]:.3e})"
        )
    return GraphRep(G=y_blk @ np.linalg.inv(x_blk))


def graph_transform(G, dxf):
    """Image chart under the block map: G' = (dxf - G)^{-1}.

    The image of graph(G) under [[dxf, -I], [I, 0]] is graph(G') whenever
    dxf - G is invertible.
    """
    g = G.G if isinstance(G, GraphRep) else np.asarray(G, dtype=np.float64)
    dxf = np.asarray(dxf, dtype=np.float64)
    m = dxf - g
    sv = np.linalg.svd(m, compute_uv=False)
    if sv[-1] == 0.0 or sv[0] / sv[-1] > GRAPH_COND_LIMIT:
        raise ConeDegeneracyError(
            "dxf - G is numerically singular; image leaves the chart"
        )
    return GraphRep(G=np.linalg.inv(m))


def apply_linear(A, E):
    """Frame of the image A(span E)."""
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (E.ambient_dim, E.ambient_dim):
        raise ConfigError(
            f"A must be {E.ambient_dim} x {E.ambient_dim}, got {A.shape}"
        )
    return orthonormalize(A @ E.cols)


def restricted_det(A, E):
    """Volume expansion of A restricted to span(E).

    sqrt(det((A E)^T (A E))) for an orthonormal E, computed as the product
    of QR diagonal magnitudes for stability at large expansion rates.
    """
    A = np.asarray(A, dtype=np.float64)
    r = np.linalg.qr(A @ E.cols, mode="r")
    return float(np.prod(np.abs(np.diag(r))))


def log_restricted_det(A, E):
    """log of restricted_det, safe when the product overflows."""
    A = np.asarray(A, dtype=np.float64)
    r = np.linalg.qr(A @ E.cols, mode="r")
    return float(np.sum(np.log(np.abs(np.diag(r)))))


def haar_random_subspace(rng, ambient_dim, k):
    """Rotation-invariant random k-plane from a Gaussian matrix.

    Rank-deficient draws (measure zero, but possible in floating point)
    are redrawn.
    """
    ambient_dim = int(ambient_dim)
    k = int(k)
    if not 1 <= k <= ambient_dim:
        raise ConfigError(f"need 1 <= k <= {ambient_dim}, got k = {k}")
    while True:
        raw = rng.standard_normal((ambient_dim, k))
        try:
            return orthonormalize(raw)
        except DegenerateSubspaceError:
            continue
