"""Volume-preserving noise on the torus.

The rotational model composes K compactly-supported rotations, one per grid
center, followed by a global translation:

    R = T_v . Phi_K . ... . Phi_1,
    Phi_i(z) = z_i + exp(psi(|z - z_i|) U_i) (z - z_i),

where psi is a smooth bump equal to 1 within radius 1/10 of the center and
0 beyond 1/5, U_i is skew-symmetric, and the offset z - z_i means its unique
lift in [-1/2, 1/2)^d. Each factor is an exact volume-preserving
diffeomorphism; parameters (v, {U_i}) are drawn uniformly from a Euclidean
ball whose radius is calibrated so the composed Jacobian and its inverse
stay bounded by 2 and the standard cone is mapped into the tighter one.

Two cheaper models live alongside: a Shift that translates only the x
block (its Jacobian is the identity, which is exactly why its subspace
marginal is degenerate), and None for deterministic baselines.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as _k
from .exceptions import ConfigError, UnsupportedVariantError
from .streams import derive_stream

BUMP_R0 = _k.BUMP_R0
BUMP_R1 = _k.BUMP_R1

# covering radius the faithful center grid must achieve
COVER_RADIUS = 1.0 / 20.0

# condition targets: operator norms at most 2, cone 1/20 -> 1/10
OP_NORM_BOUND = 2.0
CONE_IN = 1.0 / 20.0
CONE_OUT = 1.0 / 10.0

# calibration knobs: fixed internal stream, bisection on [0, 1/2]
_CALIBRATION_SEED = 112358132134
_CALIBRATION_TRIALS = 8192
_CALIBRATION_ITERS = 14
_CALIBRATION_MARGIN = 0.1

_c_max_cache = {}


@dataclass(frozen=True)
class RotationalParams:
    """Geometry and sampling radius of the rotational model."""

    d: int
    centers: np.ndarray
    c: float
    zeta: float
    mode: str  # "faithful" or "light"

    @property
    def K(self):
        return self.centers.shape[0]

    @property
    def nu(self):
        """Parameters per skew matrix: the strict upper triangle."""
        return (self.d * (self.d - 1)) // 2

    @property
    def param_dim(self):
        return self.d + self.K * self.nu


@dataclass(frozen=True)
class NoiseModel:
    variant: str  # "Rotational", "Shift", or "None"
    N: int
    params: Optional[RotationalParams] = None
    epsilon: float = 0.0

    @property
    def d(self):
        return 2 * self.N


@dataclass(frozen=True)
class NoiseSample:
    """One draw omega = (v, {U_i}); rotations kept as packed upper triangles."""

    v: np.ndarray
    u_packed: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def skew_matrices(self, d):
        nu = (d * (d - 1)) // 2
        k = self.u_packed.shape[0] // nu if nu else 0
        out = []
        for i in range(k):
            m = np.zeros((d, d))
            _k.skew_from_packed_into(m, self.u_packed[i * nu:(i + 1) * nu])
            out.append(m)
        return out


def torus_lift(delta):
    """Componentwise lift to [-1/2, 1/2)."""
    return np.mod(np.asarray(delta, dtype=np.float64) + 0.5, 1.0) - 0.5


def torus_distance(a, b):
    return float(np.linalg.norm(torus_lift(np.asarray(a) - np.asarray(b))))


def faithful_centers(d):
    """Cubic grid of spacing 1/ceil(10 sqrt(d)).

    The half-diagonal of a grid cell is then at most 1/20, so the balls of
    radius 1/20 around the centers cover the torus.
    """
    m = int(np.ceil(10.0 * np.sqrt(d)))
    return grid_centers(d, m)


def grid_centers(d, per_axis):
    per_axis = int(per_axis)
    if per_axis < 1:
        raise ConfigError(f"per_axis must be >= 1, got {per_axis}")
    axis = np.arange(per_axis) / per_axis
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    return np.ascontiguousarray(
        np.stack([g.ravel() for g in grids], axis=1)
    )


def covering_ok(centers, d, n_points=100_000, radius=COVER_RADIUS, seed=97):
    """Rejection check: every uniform test point is within radius of a center."""
    rng = derive_stream(seed, 0)
    r2 = radius * radius
    chunk = 4096
    remaining = n_points
    while remaining > 0:
        m = min(chunk, remaining)
        pts = rng.random((m, d))
        diff = np.abs(pts[:, None, :] - centers[None, :, :])
        diff = np.minimum(diff, 1.0 - diff)
        d2 = np.einsum("mkd,mkd->mk", diff, diff)
        if not np.all(d2.min(axis=1) <= r2):
            return False
        remaining -= m
    return True


def rotational_model(N, centers=None, per_axis=None, c=None, zeta=None, mode="faithful"):
    """Rotational noise model in dimension d = 2N.

    mode "faithful" builds the covering grid and verifies the covering;
    mode "light" takes a user center list or a coarser per_axis grid and
    skips the check (reports carry the mode label). When c is omitted it
    is calibrated to the largest radius passing the condition checks with
    a 10% margin; an explicit c must not exceed that calibrated bound.
    """
    if N < 1:
        raise ConfigError(f"N must be >= 1, got {N}")
    d = 2 * int(N)
    if mode not in ("faithful", "light"):
        raise ConfigError(f"mode must be 'faithful' or 'light', got {mode!r}")
    if mode == "faithful":
        if centers is not None or per_axis is not None:
            raise ConfigError("faithful mode builds its own center grid")
        centers = faithful_centers(d)
        if not covering_ok(centers, d):
            raise ConfigError(
                "faithful center grid fails the 1/20 covering check"
            )
    else:
        if centers is None and per_axis is None:
            raise ConfigError("light mode needs centers or per_axis")
        if centers is None:
            centers = grid_centers(d, per_axis)
        centers = np.ascontiguousarray(np.asarray(centers, dtype=np.float64))
        if centers.ndim != 2 or centers.shape[1] != d:
            raise ConfigError(
                f"centers must have shape (K, {d}), got {centers.shape}"
            )
        if np.any(centers < 0.0) or np.any(centers >= 1.0):
            raise ConfigError("centers must lie in [0, 1)")
    cmax = calibrate_c_max(d, centers)
    if c is None:
        c = cmax
    else:
        c = float(c)
        if c < 0.0:
            raise ConfigError(f"c must be >= 0, got {c}")
        if c > cmax:
            raise ConfigError(
                f"c = {c:.6g} exceeds the calibrated bound c_max = {cmax:.6g}"
            )
    if zeta is None:
        zeta = 0.5 * c
    params = RotationalParams(
        d=d, centers=centers, c=float(c), zeta=float(zeta), mode=mode
    )
    return NoiseModel(variant="Rotational", N=int(N), params=params)


def shift_model(N, epsilon):
    epsilon = float(epsilon)
    if not 0.0 <= epsilon < 0.5:
        raise ConfigError(f"epsilon must lie in [0, 1/2), got {epsilon}")
    return NoiseModel(variant="Shift", N=int(N), epsilon=epsilon)


def none_model(N):
    return NoiseModel(variant="None", N=int(N))


def bump(r):
    """The radial profile: 1 on [0, 1/10], 0 on [1/5, inf), smooth between."""
    if r < 0.0:
        raise ConfigError(f"r must be >= 0, got {r}")
    return float(_k.bump_val(float(r)))


def bump_deriv(r):
    if r < 0.0:
        raise ConfigError(f"r must be >= 0, got {r}")
    return float(_k.bump_deriv(float(r)))


def _check_skew(U, d=None):
    U = np.ascontiguousarray(U, dtype=np.float64)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ConfigError(f"U must be square, got shape {U.shape}")
    if d is not None and U.shape[0] != d:
        raise ConfigError(f"U must be {d} x {d}, got {U.shape}")
    if np.max(np.abs(U + U.T)) > 1e-12:
        raise ConfigError("U must be skew-symmetric")
    return U


def matrix_exp_skew(U):
    """exp(U) for skew U: proper orthogonal by construction."""
    U = _check_skew(U)
    d = U.shape[0]
    out = np.empty((d, d))
    _k.expm_scaled_into(out, U, 1.0, np.empty((d, d)), np.empty((d, d)))
    return out


def apply_phi(z, center, U):
    """One compactly-supported rotation factor; fixes the center, identity
    beyond distance 1/5 from it."""
    z = np.asarray(z, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    U = _check_skew(U, z.shape[0])
    delta = torus_lift(z - center)
    r = float(np.linalg.norm(delta))
    if r >= BUMP_R1 or not U.any():
        return z.copy()
    rot = matrix_exp_skew(bump(r) * U)
    out = np.mod(center + rot @ delta, 1.0)
    out[out == 1.0] = 0.0
    return out


def jac_phi(z, center, U):
    """Jacobian of one rotation factor.

    exp(psi(r) U) (I + (psi'(r)/r) (U delta) delta^T); the rank-one term
    vanishes on the plateau and outside the support, so the r -> 0 limit
    is exp(psi(0) U) with no singularity.
    """
    z = np.asarray(z, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    U = _check_skew(U, z.shape[0])
    d = z.shape[0]
    delta = torus_lift(z - center)
    r = float(np.linalg.norm(delta))
    if r >= BUMP_R1:
        return np.eye(d)
    rot = matrix_exp_skew(bump(r) * U)
    sp = bump_deriv(r)
    if sp == 0.0 or r == 0.0:
        return rot
    return rot @ (np.eye(d) + (sp / r) * np.outer(U @ delta, delta))


def sample_noise(rng, model):
    """One parameter draw.

    Rotational: uniform on the Euclidean ball of radius c in the stacked
    parameter space (d translation entries first, then the packed skew
    triangles center by center); consumes param_dim normals then one
    uniform. Shift: N uniforms on [-epsilon, epsilon].
    """
    if model.variant == "Rotational":
        p = model.params
        x = _ball_points(rng, 1, p.param_dim, p.c)[0]
        return NoiseSample(v=x[: p.d].copy(), u_packed=x[p.d:].copy())
    if model.variant == "Shift":
        v = rng.uniform(-model.epsilon, model.epsilon, model.N)
        return NoiseSample(v=v)
    raise UnsupportedVariantError("the None model has nothing to sample")


def _ball_points(rng, m, p, radius):
    """m uniform draws from the radius-c ball in R^p.

    Stream order per block: (m, p) standard normals, then m uniforms for
    the radial law.
    """
    g = rng.standard_normal((m, p))
    u = rng.random(m)
    nrm = np.linalg.norm(g, axis=1, keepdims=True)
    nrm[nrm == 0.0] = 1.0
    return radius * (u[:, None] ** (1.0 / p)) * g / nrm


def draw_noise_block(rng, model, nsteps):
    """Per-step noise rows for the compiled drivers: (vblock, ublock).

    The stream consumption is a fixed function of the model alone, so runs
    that track different frame sizes over the same seed see identical noise
    paths.
    """
    nsteps = int(nsteps)
    if model.variant == "Rotational":
        p = model.params
        x = _ball_points(rng, nsteps, p.param_dim, p.c)
        return (
            np.ascontiguousarray(x[:, : p.d]),
            np.ascontiguousarray(x[:, p.d:]),
        )
    if model.variant == "Shift":
        v = rng.uniform(-model.epsilon, model.epsilon, (nsteps, model.N))
        return np.ascontiguousarray(v), np.zeros((nsteps, 0))
    return np.zeros((nsteps, 0)), np.zeros((nsteps, 0))


def kernel_noise_args(model):
    """(noise_code, centers) pair for the compiled kernels."""
    if model.variant == "Rotational":
        return _k.NOISE_ROTATIONAL, model.params.centers
    if model.variant == "Shift":
        return _k.NOISE_SHIFT, np.zeros((0, model.d))
    return _k.NOISE_NONE, np.zeros((0, model.d))


def _chain_buffers(d):
    return (
        np.empty(d), np.empty(d), np.empty(d),
        np.empty((d, d)), np.empty((d, d)), np.empty((d, d)),
        np.empty((d, d)), np.empty((d, d)), np.empty((d, d)),
    )


def apply_R(z, sample, model):
    """Full noise map at z for one sample."""
    z = np.array(z, dtype=np.float64)
    if z.shape != (model.d,):
        raise ConfigError(f"z must have shape ({model.d},), got {z.shape}")
    if model.variant == "Rotational":
        jac = np.empty((model.d, model.d))
        _k.apply_noise_chain(
            z, model.params.centers, sample.u_packed, sample.v, 0, jac,
            *_chain_buffers(model.d),
        )
        return z
    if model.variant == "Shift":
        z[: model.N] = np.mod(z[: model.N] + sample.v, 1.0)
        z[z == 1.0] = 0.0
        return z
    return z


def jac_R(z, sample, model):
    """Jacobian of the noise map at z; identity for Shift and None."""
    z = np.array(z, dtype=np.float64)
    if z.shape != (model.d,):
        raise ConfigError(f"z must have shape ({model.d},), got {z.shape}")
    if model.variant == "Rotational":
        jac = np.empty((model.d, model.d))
        _k.apply_noise_chain(
            z, model.params.centers, sample.u_packed, sample.v, 1, jac,
            *_chain_buffers(model.d),
        )
        return jac
    return np.eye(model.d)


@dataclass(frozen=True)
class ConeConditionReport:
    variant: str
    trials: int
    max_op_norm: float
    max_inv_norm: float
    max_graph_norm: float
    op_bound: float
    graph_bound: float
    passes: bool


def _graph_batch(rng, trials, nn, slope_cap):
    """Random slope matrices with spectral norm uniform in (0, slope_cap]."""
    g = rng.standard_normal((trials, nn, nn))
    scale = slope_cap * rng.random(trials)
    nrm = np.linalg.svd(g, compute_uv=False)[:, 0]
    nrm[nrm == 0.0] = 1.0
    return g * (scale / nrm)[:, None, None]


def _condition_stats(model, zs, gmats, samples):
    """Kernel-backed norms for a batch: rows (|jac|, |jac^-1|, |G'|)."""
    trials = zs.shape[0]
    out = np.empty((trials, 3))
    _k.cone_condition_trials(
        np.ascontiguousarray(zs),
        np.ascontiguousarray(gmats),
        np.ascontiguousarray(samples),
        model.params.centers,
        out,
    )
    return out


def check_cone_condition(model, trials, seed=5150):
    """Empirical test of the norm and cone conditions on random inputs.

    Draws z uniform, a graph subspace with slope norm at most 1/20, and a
    noise sample; reports the worst operator norm, inverse norm, and image
    slope norm against the bounds 2, 2, 1/10.
    """
    trials = int(trials)
    rng = derive_stream(seed, 0)
    nn = model.N
    if model.variant == "Rotational":
        p = model.params
        max_op = 0.0
        max_inv = 0.0
        max_graph = 0.0
        chunk = max(1, min(trials, 4_194_304 // max(1, p.param_dim)))
        remaining = trials
        while remaining > 0:
            m = min(chunk, remaining)
            zs = rng.random((m, model.d))
            gmats = _graph_batch(rng, m, nn, CONE_IN)
            samples = _ball_points(rng, m, p.param_dim, p.c)
            stats = _condition_stats(model, zs, gmats, samples)
            max_op = max(max_op, float(stats[:, 0].max()))
            max_inv = max(max_inv, float(stats[:, 1].max()))
            max_graph = max(max_graph, float(stats[:, 2].max()))
            remaining -= m
    elif model.variant in ("Shift", "None"):
        # Jacobian is the identity: the graph passes through unchanged
        rng.random((trials, model.d))
        g = _graph_batch(rng, trials, nn, CONE_IN)
        max_graph = float(np.linalg.svd(g, compute_uv=False)[:, 0].max())
        max_op = 1.0
        max_inv = 1.0
    else:
        raise UnsupportedVariantError(f"unknown variant {model.variant!r}")
    passes = (
        max_op <= OP_NORM_BOUND
        and max_inv <= OP_NORM_BOUND
        and max_graph <= CONE_OUT
    )
    return ConeConditionReport(
        variant=model.variant,
        trials=trials,
        max_op_norm=max_op,
        max_inv_norm=max_inv,
        max_graph_norm=max_graph,
        op_bound=OP_NORM_BOUND,
        graph_bound=CONE_OUT,
        passes=passes,
    )


@dataclass(frozen=True)
class SpreadReport:
    """Histogram summary of where one (z, E) pair is sent by the noise."""

    variant: str
    mode: str
    trials: int
    bins: int
    point_hist: np.ndarray      # (d, bins) displacement marginals
    point_ranges: np.ndarray    # (d, 2) empirical displacement ranges
    angle_hist: np.ndarray      # (bins,) largest principal angle to E
    angle_range: tuple
    min_point_occupancy: int
    degenerate_subspace_marginal: bool


def check_nd_spread(model, z, E, samples, bins=16, seed=6021):
    """Crude nondegeneracy diagnostic for the joint point/subspace noise law.

    Pushes one fixed (z, E) through `samples` independent draws and
    histograms the image displacements per coordinate plus the largest
    principal angle of D R(E) against E, both over their empirical ranges.
    A model whose subspace marginal is a point mass (Shift: D R = I) is
    flagged degenerate. Histogram occupancy is a diagnostic, not a density
    bound.
    """
    samples = int(samples)
    bins = int(bins)
    z = np.ascontiguousarray(z, dtype=np.float64)
    ecols = np.ascontiguousarray(E.cols, dtype=np.float64)
    d = model.d
    if model.variant == "Rotational":
        p = model.params
        rng = derive_stream(seed, 0)
        disp = np.empty((samples, d))
        ang = np.empty(samples)
        done = 0
        chunk = max(1, min(samples, 4_194_304 // max(1, p.param_dim)))
        while done < samples:
            m = min(chunk, samples - done)
            draws = _ball_points(rng, m, p.param_dim, p.c)
            _k.nd_spread_block(
                z, ecols, draws, p.centers, disp[done:done + m], ang[done:done + m]
            )
            done += m
        mode = p.mode
    elif model.variant == "Shift":
        rng = derive_stream(seed, 0)
        disp = np.zeros((samples, d))
        disp[:, : model.N] = rng.uniform(-model.epsilon, model.epsilon, (samples, model.N))
        ang = np.zeros(samples)
        mode = "n/a"
    else:
        disp = np.zeros((samples, d))
        ang = np.zeros(samples)
        mode = "n/a"

    point_hist = np.empty((d, bins), dtype=np.int64)
    point_ranges = np.empty((d, 2))
    for c in range(d):
        lo, hi = float(disp[:, c].min()), float(disp[:, c].max())
        point_ranges[c] = (lo, hi)
        if hi <= lo:
            h = np.zeros(bins, dtype=np.int64)
            h[0] = samples
        else:
            h, _ = np.histogram(disp[:, c], bins=bins, range=(lo, hi))
        point_hist[c] = h
    alo, ahi = float(ang.min()), float(ang.max())
    if ahi <= alo:
        angle_hist = np.zeros(bins, dtype=np.int64)
        angle_hist[0] = samples
    else:
        angle_hist, _ = np.histogram(ang, bins=bins, range=(alo, ahi))
    return SpreadReport(
        variant=model.variant,
        mode=mode,
        trials=samples,
        bins=bins,
        point_hist=point_hist,
        point_ranges=point_ranges,
        angle_hist=angle_hist,
        angle_range=(alo, ahi),
        min_point_occupancy=int(point_hist.min()),
        degenerate_subspace_marginal=bool(ahi <= alo),
    )


def composition_locality_margin(model, z, sample):
    """Margin of the locality claim for the covering center of z.

    Finds the nearest center z_j (within 1/20 in faithful mode) and
    returns 1/10 minus the distance between z_j and the image of z under
    the factors applied before Phi_j. Positive margin means the j-th
    factor still sees the point inside its plateau-adjacent ball.
    """
    if model.variant != "Rotational":
        raise UnsupportedVariantError("locality is a rotational-model claim")
    p = model.params
    z = np.asarray(z, dtype=np.float64)
    dists = np.array([torus_distance(z, c) for c in p.centers])
    j = int(np.argmin(dists))
    skews = sample.skew_matrices(p.d)
    w = z.copy()
    for i in range(j):
        w = apply_phi(w, p.centers[i], skews[i])
    return CONE_OUT - torus_distance(w, p.centers[j])


def worst_case_condition_stats(d, centers, c, trials, seed=_CALIBRATION_SEED):
    """Max (|jac|, |jac^{-1}|, slope bound) over Monte Carlo (z, omega).

    The slope statistic is the per-sample analytic worst case over every
    input graph with norm at most 1/20, so it dominates any sampled-graph
    statistic at the same (z, omega) pairs.
    """
    K = centers.shape[0]
    nu = (d * (d - 1)) // 2
    p = d + K * nu
    rng = derive_stream(seed, 0)
    worst = np.zeros(3)
    chunk = max(1, min(int(trials), 4_194_304 // max(1, p)))
    remaining = int(trials)
    while remaining > 0:
        m = min(chunk, remaining)
        draws = _ball_points(rng, m, p, c)
        zs = np.ascontiguousarray(rng.random((m, d)))
        out = np.empty((m, 3))
        _k.cone_condition_worst(zs, draws, centers, CONE_IN, out)
        worst = np.maximum(worst, out.max(axis=0))
        remaining -= m
    return worst


def calibrate_c_max(d, centers, margin=_CALIBRATION_MARGIN):
    """Largest sampling radius passing the condition checks with a margin.

    Bisects c on [0, 1/2]; each candidate replays the same fixed stream
    (internal seed, independent of user seeds) of points and parameter
    directions, rescaled to the candidate radius, and the worst-case
    statistics must stay below the bounds shrunk by the margin. Cached
    per center geometry.
    """
    centers = np.ascontiguousarray(np.asarray(centers, dtype=np.float64))
    key = (d, centers.shape[0], hashlib.sha256(centers.tobytes()).hexdigest(), margin)
    hit = _c_max_cache.get(key)
    if hit is not None:
        return hit

    op_t = OP_NORM_BOUND / (1.0 + margin)
    gr_t = CONE_OUT / (1.0 + margin)

    def ok(c):
        worst = worst_case_condition_stats(d, centers, c, _CALIBRATION_TRIALS)
        return worst[0] <= op_t and worst[1] <= op_t and worst[2] <= gr_t

    lo, hi = 0.0, 0.5
    if ok(hi):
        lo = hi
    else:
        for _ in range(_CALIBRATION_ITERS):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
    _c_max_cache[key] = lo
    return lo
