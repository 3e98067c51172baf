"""Lyapunov spectrum estimation along random compositions.

The drivers evolve a point of the doubled torus together with an
orthonormal frame, re-orthonormalizing after every step because Jacobian
entries grow with the kick size. Per-step log diagonals accumulate into
exponent estimates; the same machinery reports cone membership of the
leading block and critical-set avoidance of the visited points.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from .exceptions import (
    ConfigError,
    InvariantViolationError,
    WindowTooLongError,
)
from .families import (
    MapFamily,
    critical_threshold,
    eval_F,
    jac_F,
    jac_f,
    kernel_args,
    reduce_mod1,
)
from .grassmann import SubspaceFrame, orthonormalize
from .noise import (
    NoiseModel,
    NoiseSample,
    apply_R,
    draw_noise_block,
    jac_R,
    kernel_noise_args,
)
from .streams import derive_stream

DEFAULT_BURN_IN = 1000
BATCH_BLOCKS = 20
STEP_DRIFT_LIMIT = 1e-6
CONE_SLOPE_WIDE = 2.0
CONE_SLOPE_NARROW = 0.1
WINDOW_MAX_STEPS = 8
WINDOW_SPREAD_LIMIT = 600.0

_NOISE_BUDGET = 4_194_304


@dataclass
class TrajectoryState:
    """Point, frame, and accumulated log volume of one trajectory.

    frame columns stay orthonormal between steps; log_accum[j] carries the
    summed log expansion of column j since the state was created.
    """

    z: np.ndarray
    frame: np.ndarray
    log_accum: np.ndarray = None
    step: int = 0

    def __post_init__(self):
        self.z = np.ascontiguousarray(self.z, dtype=np.float64)
        self.frame = np.ascontiguousarray(self.frame, dtype=np.float64)
        if self.frame.ndim != 2 or self.frame.shape[0] != self.z.shape[0]:
            raise ConfigError(
                "frame must have one row per coordinate of z, got "
                f"{self.frame.shape} for z of length {self.z.shape[0]}"
            )
        if self.log_accum is None:
            self.log_accum = np.zeros(self.frame.shape[1])
        else:
            self.log_accum = np.array(self.log_accum, dtype=np.float64)


@dataclass(frozen=True)
class LyapunovReport:
    """Spectrum estimate with per-exponent batch-means standard errors."""

    exponents: np.ndarray
    stderrs: np.ndarray
    n_steps: int
    burn_in: int
    seed: int
    trial_index: int
    family_variant: str
    noise_variant: str
    cone_fraction: float
    empirical_c0: float
    pairing_gaps: np.ndarray
    sum_exponents: float
    max_step_volume_drift: float


@dataclass(frozen=True)
class ConeTrackingReport:
    """Per-step cone and critical-set flags along one trajectory."""

    n_steps: int
    beta: float
    noncritical_flags: np.ndarray
    cone_wide_flags: np.ndarray
    cone_narrow_flags: np.ndarray
    noncritical_fraction: float
    cone_wide_fraction: float
    cone_narrow_fraction: float
    first_narrow_step: int
    seed: int
    trial_index: int


@dataclass(frozen=True)
class WindowReport:
    """Singular value decomposition of a short window of the composition.

    log_sigmas holds all 2N log singular values in nonincreasing order;
    the top half comes from the forward product, the bottom half from the
    product of exact block inverses, both assembled in factored log scale.
    """

    n_steps: int
    log_sigmas: np.ndarray
    top_left: SubspaceFrame
    top_right: SubspaceFrame
    bottom_left: SubspaceFrame
    bottom_right: SubspaceFrame
    z_path: np.ndarray


def _point_array(z0, fam):
    z = np.array(z0, dtype=np.float64).ravel()
    d = 2 * fam.N
    if z.shape != (d,):
        raise ConfigError(f"z0 must have {d} coordinates, got shape {z.shape}")
    return reduce_mod1(z)


def _frame_array(E0, d):
    cols = E0.cols if isinstance(E0, SubspaceFrame) else np.asarray(E0, dtype=np.float64)
    if cols.ndim != 2 or cols.shape[0] != d:
        raise ConfigError(
            f"frame must have shape ({d}, k), got {np.asarray(cols).shape}"
        )
    if cols.shape[1] > d:
        raise ConfigError("frame cannot have more columns than the ambient dimension")
    return np.ascontiguousarray(orthonormalize(cols).cols)


def _check_model(fam, model):
    if model.N != fam.N:
        raise ConfigError(
            f"noise model has N={model.N} but the family has N={fam.N}"
        )


def _chunk_steps(model):
    """Steps per noise block. A function of the model alone so that runs
    tracking different frame sizes consume identical streams."""
    if model.variant == "Rotational":
        p = model.params.param_dim
    else:
        p = max(1, model.N)
    return int(min(8192, max(256, _NOISE_BUDGET // p)))


def _run_frame(z, q, fam, model, nsteps, rng, want_gnorm, det_thr):
    """Drive nsteps of point+frame evolution, chunking the noise draws.

    Returns (step_logs, gnorms, noncrit, max_drift, c0_max) with z and q
    updated in place semantics (the returned arrays alias fresh buffers).
    """
    k = q.shape[1]
    step_logs = np.empty((nsteps, k))
    gnorms = np.full(nsteps, np.inf) if want_gnorm else np.zeros(0)
    noncrit = np.zeros(nsteps if det_thr > 0.0 else 0, dtype=np.uint8)
    err_out = np.empty(2)
    sumlog_out = np.zeros(1)
    c0_out = np.zeros(1)

    if fam.kernel_code is None:
        _run_frame_python(
            z, q, fam, model, nsteps, rng, want_gnorm, det_thr,
            step_logs, gnorms, noncrit, err_out, sumlog_out, c0_out,
        )
    else:
        fam_code, L, mu, amat = kernel_args(fam)
        noise_code, centers = kernel_noise_args(model)
        chunk = _chunk_steps(model)
        done = 0
        while done < nsteps:
            m = min(chunk, nsteps - done)
            vblock, ublock = draw_noise_block(rng, model, m)
            _k.run_block(
                z, q, fam_code, L, mu, amat,
                noise_code, centers, vblock, ublock,
                step_logs[done:done + m],
                1 if want_gnorm else 0,
                gnorms[done:done + m] if want_gnorm else gnorms,
                det_thr,
                noncrit[done:done + m] if det_thr > 0.0 else noncrit,
                err_out, sumlog_out, c0_out,
            )
            if err_out[0] >= 0.0:
                bad = done + int(err_out[0])
                raise InvariantViolationError(
                    f"per-step log volume drifted by {err_out[1]:.3e} at step "
                    f"{bad} (limit {STEP_DRIFT_LIMIT:.0e}); z={z.tolist()}"
                )
            done += m
    return step_logs, gnorms, noncrit, float(sumlog_out[0]), float(c0_out[0])


def _run_frame_python(
    z, q, fam, model, nsteps, rng, want_gnorm, det_thr,
    step_logs, gnorms, noncrit, err_out, sumlog_out, c0_out,
):
    """Pure python mirror of the compiled driver for families without a
    kernel code (finite-difference or callable Jacobians)."""
    nn = fam.N
    k = q.shape[1]
    logrow = np.empty(k)
    xbuf = np.empty((nn, nn))
    ybuf = np.empty((nn, nn))
    chunk = _chunk_steps(model)
    done = 0
    while done < nsteps:
        m = min(chunk, nsteps - done)
        vblock, ublock = draw_noise_block(rng, model, m)
        for i in range(m):
            dxf = jac_f(z[:nn], fam)
            if det_thr > 0.0:
                noncrit[done + i] = 1 if abs(np.linalg.det(dxf)) > det_thr else 0
            ratio = np.linalg.norm(dxf) / fam.L
            if ratio > c0_out[0]:
                c0_out[0] = ratio
            jf = np.zeros((2 * nn, 2 * nn))
            jf[:nn, :nn] = dxf
            jf[:nn, nn:] = -np.eye(nn)
            jf[nn:, :nn] = np.eye(nn)
            znew = eval_F(z, fam)
            if model.variant == "Rotational":
                sample = NoiseSample(
                    v=vblock[i].copy(), u_packed=ublock[i].copy()
                )
                jr = jac_R(znew, sample, model)
                znew = apply_R(znew, sample, model)
                mtot = jr @ jf
            elif model.variant == "Shift":
                znew[:nn] = reduce_mod1(znew[:nn] + vblock[i])
                mtot = jf
            else:
                mtot = jf
            qnew = mtot @ q
            q[:] = qnew
            _k.mgs_into(q, logrow)
            step_logs[done + i] = logrow
            if k == 2 * nn:
                asum = abs(logrow.sum())
                if asum > sumlog_out[0]:
                    sumlog_out[0] = asum
                if asum > STEP_DRIFT_LIMIT:
                    raise InvariantViolationError(
                        f"per-step log volume drifted by {asum:.3e} at step "
                        f"{done + i} (limit {STEP_DRIFT_LIMIT:.0e}); "
                        f"z={z.tolist()}"
                    )
            if want_gnorm:
                gnorms[done + i] = _k.graph_norm_leading(q, nn, xbuf, ybuf)
            z[:] = znew
        done += m


def step(state, fam, model, rng):
    """Advance one step of the random composition.

    Draws one noise sample from rng, moves the point through the kicked map
    and the noise, pushes the frame through the total Jacobian, and
    re-orthonormalizes. Returns a new TrajectoryState; the input is not
    modified.
    """
    _check_model(fam, model)
    z = _point_array(state.z, fam)
    q = np.ascontiguousarray(state.frame.copy())
    logs, _, _, _, _ = _run_frame(
        z, q, fam, model, 1, rng, want_gnorm=False, det_thr=0.0
    )
    if not np.all(np.isfinite(logs)):
        raise InvariantViolationError(
            f"frame column collapsed at step {state.step}; z={z.tolist()}"
        )
    return TrajectoryState(
        z=z,
        frame=q,
        log_accum=state.log_accum + logs[0],
        step=state.step + 1,
    )


def qr_spectrum(
    z0, fam, model, n, seed, *, burn_in=DEFAULT_BURN_IN, trial_index=0, k=None
):
    """Estimate the leading k Lyapunov exponents by per-step QR.

    Runs burn_in unrecorded steps first (point and frame both evolve, so
    the frame aligns before measurement), then n recorded steps. Exponent
    j is the mean per-step log diagonal of column j over the measurement
    window; standard errors come from batch means over 20 consecutive
    blocks. The report also carries the fraction of measurement steps
    whose leading N frame columns form a graph of slope at most 2 over the
    x block, the empirical kick-scale constant max |dxf|_F / L, and for
    full frames the pairing gaps exponent_i + exponent_{2N+1-i}.
    """
    _check_model(fam, model)
    n = int(n)
    burn_in = int(burn_in)
    if n <= 0:
        raise ConfigError("n must be positive")
    if burn_in < 0:
        raise ConfigError("burn_in cannot be negative")
    d = 2 * fam.N
    if k is None:
        k = d
    k = int(k)
    if not 1 <= k <= d:
        raise ConfigError(f"k must be in [1, {d}], got {k}")

    z = _point_array(z0, fam)
    q = np.ascontiguousarray(np.eye(d)[:, :k])
    rng = derive_stream(seed, trial_index)
    want_gnorm = k >= fam.N

    logs, gnorms, _, max_drift, c0_max = _run_frame(
        z, q, fam, model, burn_in + n, rng,
        want_gnorm=want_gnorm, det_thr=0.0,
    )
    window = logs[burn_in:]
    blocks = min(BATCH_BLOCKS, n)
    bs = n // blocks
    # reduce each column as a contiguous 1d array: the summation order is
    # then independent of how many columns the run tracked, so runs with
    # different frame sizes report bitwise identical shared exponents
    means = np.empty(k)
    stderrs = np.full(k, np.nan)
    for j in range(k):
        col = np.ascontiguousarray(window[:, j])
        means[j] = col.mean()
        if blocks > 1:
            block_means = col[: blocks * bs].reshape(blocks, bs).mean(axis=1)
            stderrs[j] = block_means.std(ddof=1) / np.sqrt(blocks)
    order = np.argsort(-means, kind="stable")

    exponents = means[order]
    stderrs = stderrs[order]
    if want_gnorm:
        cone_fraction = float(np.mean(gnorms[burn_in:] <= CONE_SLOPE_WIDE))
    else:
        cone_fraction = None
    if k == d:
        pairing = exponents + exponents[::-1]
        pairing_gaps = pairing[: fam.N]
    else:
        pairing_gaps = None

    return LyapunovReport(
        exponents=exponents,
        stderrs=stderrs,
        n_steps=n,
        burn_in=burn_in,
        seed=int(seed),
        trial_index=int(trial_index),
        family_variant=fam.variant,
        noise_variant=model.variant,
        cone_fraction=cone_fraction,
        empirical_c0=c0_max if fam.variant != "LinearTest" else None,
        pairing_gaps=pairing_gaps,
        sum_exponents=float(exponents.sum()) if k == d else None,
        max_step_volume_drift=max_drift if k == d else None,
    )


def grassmann_sum_estimator(z0, E0, fam, model, n, seed, *, trial_index=0):
    """Average per-step log expansion of the subspace tracked from E0.

    Each step contributes log |det| of the total Jacobian restricted to
    the current frame (the summed log diagonal of the orthonormalization),
    and the estimator is the mean over n steps. A full frame (k = 2N)
    returns the volume defect, zero up to rounding for these maps.
    """
    _check_model(fam, model)
    n = int(n)
    if n <= 0:
        raise ConfigError("n must be positive")
    z = _point_array(z0, fam)
    q = _frame_array(E0, 2 * fam.N)
    rng = derive_stream(seed, trial_index)
    logs, _, _, _, _ = _run_frame(
        z, q, fam, model, n, rng, want_gnorm=False, det_thr=0.0
    )
    return float(logs.sum(axis=1).mean())


def cone_tracking(z0, E0, fam, model, n, seed, beta, *, trial_index=0):
    """Track cone membership of an N-frame and criticality of the orbit.

    Flags per step: the pre-step point has |det dxf| above the critical
    threshold for this beta; the post-step frame is a graph over the x
    block of slope at most 2; same with slope at most 1/10.
    """
    _check_model(fam, model)
    n = int(n)
    if n <= 0:
        raise ConfigError("n must be positive")
    det_thr = critical_threshold(fam, beta)
    z = _point_array(z0, fam)
    q = _frame_array(E0, 2 * fam.N)
    if q.shape[1] != fam.N:
        raise ConfigError(
            f"cone tracking needs an N-dimensional frame, got k={q.shape[1]}"
        )
    rng = derive_stream(seed, trial_index)
    _, gnorms, noncrit, _, _ = _run_frame(
        z, q, fam, model, n, rng, want_gnorm=True, det_thr=det_thr
    )
    wide = gnorms <= CONE_SLOPE_WIDE
    narrow = gnorms <= CONE_SLOPE_NARROW
    hits = np.flatnonzero(narrow)
    return ConeTrackingReport(
        n_steps=n,
        beta=float(beta),
        noncritical_flags=noncrit.astype(bool),
        cone_wide_flags=wide,
        cone_narrow_flags=narrow,
        noncritical_fraction=float(noncrit.mean()),
        cone_wide_fraction=float(wide.mean()),
        cone_narrow_fraction=float(narrow.mean()),
        first_narrow_step=int(hits[0]) if hits.size else -1,
        seed=int(seed),
        trial_index=int(trial_index),
    )


def _step_jacobians(z, fam, model, v, upar):
    """One step returning (jf, jr, z_new) without frame bookkeeping."""
    d = 2 * fam.N
    if fam.kernel_code is None:
        dxf = jac_f(z[: fam.N], fam)
        jf = np.zeros((d, d))
        jf[: fam.N, : fam.N] = dxf
        jf[: fam.N, fam.N:] = -np.eye(fam.N)
        jf[fam.N:, : fam.N] = np.eye(fam.N)
        znew = eval_F(z, fam)
        jr = np.eye(d)
        if model.variant == "Rotational":
            sample = NoiseSample(v=v.copy(), u_packed=upar.copy())
            jr = jac_R(znew, sample, model)
            znew = apply_R(znew, sample, model)
        elif model.variant == "Shift":
            znew[: fam.N] = reduce_mod1(znew[: fam.N] + v)
        return jf, jr, znew
    fam_code, L, mu, amat = kernel_args(fam)
    noise_code, centers = kernel_noise_args(model)
    jf = np.empty((d, d))
    jr = np.empty((d, d))
    znew = z.copy()
    _k.step_with_jacs(
        znew, jf, jr, fam_code, L, mu, amat, noise_code, centers, v, upar
    )
    return jf, jr, znew


def svd_window(z0, fam, model, n, seed, *, trial_index=0, noise_path=None):
    """Singular structure of a short window of the composition.

    Assembles the window product in factored form, normalizing each factor
    and tracking the log scale, so the top N singular values come out of
    the forward product and the bottom N out of the product of exact block
    inverses without overflow. noise_path, when given, supplies the
    (vblock, ublock) rows directly and the stream is not consumed.
    """
    _check_model(fam, model)
    n = int(n)
    if not 1 <= n <= WINDOW_MAX_STEPS:
        raise ConfigError(
            f"window length must be between 1 and {WINDOW_MAX_STEPS} steps"
        )
    z = _point_array(z0, fam)
    d = 2 * fam.N
    nn = fam.N
    if noise_path is None:
        rng = derive_stream(seed, trial_index)
        vblock, ublock = draw_noise_block(rng, model, n)
    else:
        vblock, ublock = noise_path
        vblock = np.ascontiguousarray(vblock, dtype=np.float64)
        ublock = np.ascontiguousarray(ublock, dtype=np.float64)
        if vblock.shape[0] != n or ublock.shape[0] != n:
            raise ConfigError("noise_path must carry one row per step")

    fwd = np.eye(d)
    inv = np.eye(d)
    log_fwd = 0.0
    log_inv = 0.0
    z_path = np.empty((n + 1, d))
    z_path[0] = z
    for i in range(n):
        jf, jr, z = _step_jacobians(z, fam, model, vblock[i], ublock[i])
        z_path[i + 1] = z
        mtot = jr @ jf
        # exact block inverse of jf avoids the L-sized cancellation that a
        # generic solve would introduce
        jf_inv = np.zeros((d, d))
        jf_inv[:nn, nn:] = np.eye(nn)
        jf_inv[nn:, :nn] = -np.eye(nn)
        jf_inv[nn:, nn:] = jf[:nn, :nn]
        minv = jf_inv @ np.linalg.inv(jr)
        s = np.linalg.norm(mtot)
        si = np.linalg.norm(minv)
        fwd = (mtot / s) @ fwd
        inv = inv @ (minv / si)
        log_fwd += np.log(s)
        log_inv += np.log(si)

    u1, s1, v1t = np.linalg.svd(fwd)
    u2, s2, v2t = np.linalg.svd(inv)
    with np.errstate(divide="ignore"):
        top = np.log(s1[:nn]) + log_fwd
        bottom = -(np.log(s2[:nn]) + log_inv)
    log_sigmas = np.concatenate([top, bottom[::-1]])
    spread = log_sigmas[0] - log_sigmas[-1]
    if not np.isfinite(spread) or spread > WINDOW_SPREAD_LIMIT:
        raise WindowTooLongError(
            f"window spans {spread:.1f} in log singular value spread, beyond "
            f"the {WINDOW_SPREAD_LIMIT:.0f} limit of direct assembly"
        )
    return WindowReport(
        n_steps=n,
        log_sigmas=log_sigmas,
        top_left=SubspaceFrame(np.ascontiguousarray(u1[:, :nn]), d),
        top_right=SubspaceFrame(np.ascontiguousarray(v1t.T[:, :nn]), d),
        bottom_left=SubspaceFrame(np.ascontiguousarray(v2t.T[:, :nn]), d),
        bottom_right=SubspaceFrame(np.ascontiguousarray(u2[:, :nn]), d),
        z_path=z_path,
    )
