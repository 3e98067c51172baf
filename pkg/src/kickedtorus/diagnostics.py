"""Monte Carlo and closed-form checks of the structural estimates.

Covers the critical-set measure and its scaling in L, the product-set
area formula, the cone-escape bound under conditioned windows, the
transversality residual of kick profiles, and uniformity of the
pushforward. Every estimator draws through per-trial derived streams and
reduces in fixed index order.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .exceptions import (
    ConfigError,
    InfeasibleConditioningError,
    UnsupportedVariantError,
)
from .families import (
    critical_threshold,
    in_critical_set,
    jac_f_batch,
    kernel_args,
)
from .grassmann import haar_random_subspace
from .lyapunov import _step_jacobians
from .noise import draw_noise_block, kernel_noise_args
from .streams import derive_stream

_SAMPLE_CHUNK = 1 << 18
_REJECTION_BATCH = 64
_REJECTION_LIMIT = 4096
CONE_ESCAPE_MAX_WINDOW = 6
KS_COEFF_1PCT = 1.63


@dataclass(frozen=True)
class MeasureEstimate:
    """Monte Carlo measure with binomial standard error."""

    value: float
    stderr: float
    n_samples: int
    description: str

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ConfigError(
                f"measure value must lie in [0, 1], got {self.value}"
            )

    @classmethod
    def from_fraction(cls, hits, n, description):
        n = int(n)
        value = hits / n
        return cls(
            value=float(value),
            stderr=float(np.sqrt(value * (1.0 - value) / n)),
            n_samples=n,
            description=description,
        )


@dataclass(frozen=True)
class TransversalityReport:
    """Grid-plus-refinement minimum of the transversality residual."""

    psi_name: str
    domain: str
    grid_per_axis: int
    refine_iters: int
    min_residual: float
    argmin: np.ndarray
    det_term: float
    grad_term: float


@dataclass(frozen=True)
class KSReport:
    """Per-coordinate Kolmogorov-Smirnov distances to the uniform law."""

    statistics: np.ndarray
    threshold: float
    n_samples: int
    n_steps: int
    passes: bool


def estimate_critical_measure(fam, beta, n_samples, seed):
    """Fraction of uniform x on the N-torus inside the critical set.

    Chunked Monte Carlo against the |det dxf| threshold for this beta;
    the same seed and sample count give bitwise identical flags, so the
    estimate is exactly monotone in beta.
    """
    critical_threshold(fam, beta)
    n_samples = int(n_samples)
    if n_samples <= 0:
        raise ConfigError("n_samples must be positive")
    rng = derive_stream(seed, 0)
    hits = 0
    done = 0
    while done < n_samples:
        m = min(_SAMPLE_CHUNK, n_samples - done)
        xs = rng.random((m, fam.N))
        hits += int(np.count_nonzero(in_critical_set(xs, fam, beta)))
        done += m
    return MeasureEstimate.from_fraction(
        hits, n_samples,
        f"critical-set fraction, variant={fam.variant}, N={fam.N}, "
        f"L={fam.L:g}, beta={beta:g}",
    )


def s_n_closed_form(N, delta):
    """Exact volume of the product set {prod x_i <= delta} in [0,1]^N."""
    N = int(N)
    if N < 1:
        raise ConfigError(f"N must be >= 1, got {N}")
    delta = float(delta)
    if not 0.0 < delta <= 1.0:
        raise ConfigError(f"delta must lie in (0, 1], got {delta}")
    t = -math.log(delta)
    term = 1.0
    total = 1.0
    for i in range(1, N):
        term *= t / i
        total += term
    return delta * total


def mc_product_set(N, delta, n_samples, seed):
    """Monte Carlo volume of {prod x_i <= delta} in [0,1]^N."""
    N = int(N)
    if N < 1:
        raise ConfigError(f"N must be >= 1, got {N}")
    delta = float(delta)
    if not 0.0 < delta <= 1.0:
        raise ConfigError(f"delta must lie in (0, 1], got {delta}")
    n_samples = int(n_samples)
    if n_samples <= 0:
        raise ConfigError("n_samples must be positive")
    rng = derive_stream(seed, 0)
    hits = 0
    done = 0
    while done < n_samples:
        m = min(_SAMPLE_CHUNK, n_samples - done)
        xs = rng.random((m, N))
        hits += int(np.count_nonzero(xs.prod(axis=1) <= delta))
        done += m
    return MeasureEstimate.from_fraction(
        hits, n_samples, f"product-set volume, N={N}, delta={delta:g}"
    )


def _window_stays_noncritical_python(z0, fam, model, vblock, ublock, det_thr, n):
    z = z0.copy()
    for i in range(n):
        dxf = jac_f_batch(z[None, : fam.N], fam)[0]
        if abs(np.linalg.det(dxf)) <= det_thr:
            return False
        _, _, z = _step_jacobians(z, fam, model, vblock[i], ublock[i])
    return True


def cone_escape_fraction(fam, model, beta, n, trials, seed):
    """Fraction of conditioned windows whose pushed frame leaves the cone.

    Per trial: draw one noise path of length n, one Haar N-frame, then
    rejection-sample a start point whose first n visited points all stay
    out of the critical set under that path; push the frame through the
    window and flag escape when the result is not a graph of slope at
    most 2 over the x block. The description records the reference decay
    rate L^(-beta*n) alongside.
    """
    if model.N != fam.N:
        raise ConfigError(
            f"noise model has N={model.N} but the family has N={fam.N}"
        )
    det_thr = critical_threshold(fam, beta)
    n = int(n)
    if not 1 <= n <= CONE_ESCAPE_MAX_WINDOW:
        raise ConfigError(
            f"window length must be between 1 and {CONE_ESCAPE_MAX_WINDOW}"
        )
    trials = int(trials)
    if trials <= 0:
        raise ConfigError("trials must be positive")

    d = 2 * fam.N
    use_kernel = fam.kernel_code is not None
    if use_kernel:
        fam_code, L, mu, amat = kernel_args(fam)
        noise_code, centers = kernel_noise_args(model)
    step_logs = np.empty((n, fam.N))
    gnorms = np.full(n, np.inf)
    noncrit = np.zeros(0, dtype=np.uint8)
    err_out = np.empty(2)
    sumlog_out = np.zeros(1)
    c0_out = np.zeros(1)
    escapes = 0
    for t in range(trials):
        rng = derive_stream(seed, t)
        vblock, ublock = draw_noise_block(rng, model, n)
        frame = haar_random_subspace(rng, d, fam.N).cols
        z0 = None
        attempts = 0
        while z0 is None:
            if attempts >= _REJECTION_LIMIT:
                raise InfeasibleConditioningError(
                    f"no start point out of the critical window after "
                    f"{_REJECTION_LIMIT} candidates (trial {t})"
                )
            cand = rng.random((_REJECTION_BATCH, d))
            if use_kernel:
                idx = _k.gbeta_window_accept(
                    cand, vblock, ublock, fam_code, L, mu, amat,
                    noise_code, centers, det_thr, n,
                )
                if idx >= 0:
                    z0 = cand[int(idx)].copy()
            else:
                for row in cand:
                    if _window_stays_noncritical_python(
                        row, fam, model, vblock, ublock, det_thr, n
                    ):
                        z0 = row.copy()
                        break
            attempts += _REJECTION_BATCH

        q = np.ascontiguousarray(frame)
        if use_kernel:
            _k.run_block(
                z0, q, fam_code, L, mu, amat, noise_code, centers,
                vblock, ublock, step_logs, 1, gnorms, 0.0, noncrit,
                err_out, sumlog_out, c0_out,
            )
            final_gnorm = gnorms[n - 1]
        else:
            z = z0
            logrow = np.empty(fam.N)
            for i in range(n):
                jf, jr, z = _step_jacobians(z, fam, model, vblock[i], ublock[i])
                q = np.ascontiguousarray((jr @ jf) @ q)
                _k.mgs_into(q, logrow)
            xbuf = np.empty((fam.N, fam.N))
            ybuf = np.empty((fam.N, fam.N))
            final_gnorm = _k.graph_norm_leading(q, fam.N, xbuf, ybuf)
        if not final_gnorm <= 2.0:
            escapes += 1

    return MeasureEstimate.from_fraction(
        escapes, trials,
        f"cone-escape fraction, variant={fam.variant}, N={fam.N}, "
        f"L={fam.L:g}, beta={beta:g}, n={n}; reference decay "
        f"{fam.L ** (-float(beta) * n):.6e}",
    )


@dataclass(frozen=True)
class PsiFamily:
    """Kick profile with analytic first and second derivatives.

    jac_batch maps (M, dim) points to (M, dim, dim) Jacobians; d_jac_batch
    to (M, dim, dim, dim) arrays indexed [sample, partial k, row i, col j].
    domain "unit" grids over [0, 1)^dim, "angle" over [0, 2*pi)^dim.
    """

    name: str
    dim: int
    domain: str
    jac_batch: callable
    d_jac_batch: callable

    @property
    def period(self):
        return 1.0 if self.domain == "unit" else 2.0 * np.pi


def _uncoupled_psi(domain):
    scale = 2.0 * np.pi if domain == "unit" else 1.0

    def jac_batch(xs):
        t = scale * xs
        m, nn = xs.shape
        out = np.zeros((m, nn, nn))
        idx = np.arange(nn)
        out[:, idx, idx] = scale * np.cos(t)
        return out

    def d_jac_batch(xs):
        t = scale * xs
        m, nn = xs.shape
        out = np.zeros((m, nn, nn, nn))
        idx = np.arange(nn)
        out[:, idx, idx, idx] = -scale * scale * np.sin(t)
        return out

    return PsiFamily(
        name="uncoupled", dim=2, domain=domain,
        jac_batch=jac_batch, d_jac_batch=d_jac_batch,
    )


def _strong_coupling_psi(domain):
    scale = 2.0 * np.pi if domain == "unit" else 1.0

    def jac_batch(xs):
        t = scale * xs
        c1, c2 = np.cos(t[:, 0]), np.cos(t[:, 1])
        c12 = np.cos(t[:, 0] - t[:, 1])
        out = np.empty((xs.shape[0], 2, 2))
        out[:, 0, 0] = c1 - c12
        out[:, 0, 1] = c12
        out[:, 1, 0] = c12
        out[:, 1, 1] = c2 - c12
        return scale * out

    def d_jac_batch(xs):
        t = scale * xs
        s1, s2 = np.sin(t[:, 0]), np.sin(t[:, 1])
        s12 = np.sin(t[:, 0] - t[:, 1])
        out = np.empty((xs.shape[0], 2, 2, 2))
        out[:, 0, 0, 0] = -s1 + s12
        out[:, 0, 0, 1] = -s12
        out[:, 0, 1, 0] = -s12
        out[:, 0, 1, 1] = s12
        out[:, 1, 0, 0] = -s12
        out[:, 1, 0, 1] = s12
        out[:, 1, 1, 0] = s12
        out[:, 1, 1, 1] = -s2 - s12
        return scale * scale * out

    return PsiFamily(
        name="strong-coupling", dim=2, domain=domain,
        jac_batch=jac_batch, d_jac_batch=d_jac_batch,
    )


def _identity_psi(domain):
    def jac_batch(xs):
        m, nn = xs.shape
        out = np.zeros((m, nn, nn))
        idx = np.arange(nn)
        out[:, idx, idx] = 1.0
        return out

    def d_jac_batch(xs):
        m, nn = xs.shape
        return np.zeros((m, nn, nn, nn))

    return PsiFamily(
        name="identity", dim=2, domain=domain,
        jac_batch=jac_batch, d_jac_batch=d_jac_batch,
    )


_PSI_BUILDERS = {
    "uncoupled": _uncoupled_psi,
    "strong-coupling": _strong_coupling_psi,
    "identity": _identity_psi,
}


def transversality_psi(name, domain="unit"):
    """Built-in kick profile by name: uncoupled, strong-coupling, identity."""
    if domain not in ("unit", "angle"):
        raise ConfigError(f"domain must be 'unit' or 'angle', got {domain!r}")
    try:
        builder = _PSI_BUILDERS[name]
    except KeyError:
        raise ConfigError(
            f"unknown psi family {name!r}; choose from "
            f"{sorted(_PSI_BUILDERS)}"
        ) from None
    return builder(domain)


def _adjugate_batch(a):
    """Adjugates of a stack of small square matrices via cofactors."""
    m, nn, _ = a.shape
    if nn == 1:
        return np.ones((m, 1, 1))
    if nn == 2:
        out = np.empty_like(a)
        out[:, 0, 0] = a[:, 1, 1]
        out[:, 0, 1] = -a[:, 0, 1]
        out[:, 1, 0] = -a[:, 1, 0]
        out[:, 1, 1] = a[:, 0, 0]
        return out
    out = np.empty_like(a)
    rows = np.arange(nn)
    for i in range(nn):
        for j in range(nn):
            minor = a[np.ix_(np.arange(m), rows[rows != i], rows[rows != j])]
            # Adj = cofactor transpose: entry (j, i) gets cofactor (i, j)
            out[:, j, i] = (-1.0) ** (i + j) * np.linalg.det(minor)
    return out


def _residual_terms(psi, xs):
    """(|det Dpsi|, |grad det Dpsi|_2) per row of xs."""
    jac = psi.jac_batch(xs)
    djac = psi.d_jac_batch(xs)
    dets = np.abs(np.linalg.det(jac))
    adj = _adjugate_batch(jac)
    # d_k det A = Tr(Adj(A) d_k A)
    grads = np.einsum("mij,mkji->mk", adj, djac)
    return dets, np.linalg.norm(grads, axis=1)


def transversality_residual(psi_family, grid_per_axis, refine_iters):
    """Minimum of |det Dpsi| + |grad det Dpsi| over a grid, then refined.

    A strictly positive minimum is numeric evidence that the zero sets of
    the determinant and of its gradient do not meet; a minimum at or below
    1e-10 locates a violation. Refinement is coordinate pattern search
    from the grid argmin with the step halved each sweep.
    """
    if isinstance(psi_family, str):
        psi_family = transversality_psi(psi_family)
    grid_per_axis = int(grid_per_axis)
    if grid_per_axis < 2:
        raise ConfigError("grid_per_axis must be at least 2")
    refine_iters = int(refine_iters)
    if refine_iters < 0:
        raise ConfigError("refine_iters cannot be negative")

    nn = psi_family.dim
    period = psi_family.period
    axis = np.arange(grid_per_axis) * (period / grid_per_axis)
    mesh = np.meshgrid(*([axis] * nn), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)

    best_val = np.inf
    best_pt = None
    for lo in range(0, pts.shape[0], _SAMPLE_CHUNK):
        chunk = pts[lo:lo + _SAMPLE_CHUNK]
        dets, grads = _residual_terms(psi_family, chunk)
        res = dets + grads
        i = int(np.argmin(res))
        if res[i] < best_val:
            best_val = float(res[i])
            best_pt = chunk[i].copy()

    def value_at(p):
        dets, grads = _residual_terms(psi_family, p[None, :] % period)
        return float(dets[0] + grads[0]), float(dets[0]), float(grads[0])

    step = period / grid_per_axis
    cur_val, cur_det, cur_grad = value_at(best_pt)
    cur = best_pt.copy()
    for _ in range(refine_iters):
        moved = False
        for a in range(nn):
            for sgn in (1.0, -1.0):
                trial = cur.copy()
                trial[a] += sgn * step
                val, dt, gd = value_at(trial)
                if val < cur_val:
                    cur, cur_val, cur_det, cur_grad = (
                        trial % period, val, dt, gd
                    )
                    moved = True
        if not moved:
            step *= 0.5

    return TransversalityReport(
        psi_name=psi_family.name,
        domain=psi_family.domain,
        grid_per_axis=grid_per_axis,
        refine_iters=refine_iters,
        min_residual=cur_val,
        argmin=cur,
        det_term=cur_det,
        grad_term=cur_grad,
    )


def strong_coupling_system_residual(x1, x2):
    """Left-hand sides of the three strong-coupling criticality equations.

    Inputs are angles in [0, 2*pi). Scalars give a 3-vector; array inputs
    broadcast to shape (3,) + broadcast(x1, x2).
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    c1, c2 = np.cos(x1), np.cos(x2)
    s1, s2 = np.sin(x1), np.sin(x2)
    c12 = np.cos(x1 - x2)
    s12 = np.sin(x1 - x2)
    e1 = c1 * c2 + (c1 + c2) * c12
    e2 = -s1 * c2 - s1 * c12 - (c1 + c2) * s12
    e3 = -s2 * c1 - s2 * c12 + (c1 + c2) * s12
    return np.stack([e1, e2, e3])


def strong_coupling_min_residual(grid_per_axis=2048):
    """Grid minimum of the max-abs of the three system residuals.

    Strictly positive output means the three equations have no common
    zero at grid resolution. Returns (min_value, argmin_angles).
    """
    grid_per_axis = int(grid_per_axis)
    if grid_per_axis < 2:
        raise ConfigError("grid_per_axis must be at least 2")
    axis = np.arange(grid_per_axis) * (2.0 * np.pi / grid_per_axis)
    best_val = np.inf
    best_pt = (0.0, 0.0)
    rows_per_chunk = max(1, _SAMPLE_CHUNK // grid_per_axis)
    for lo in range(0, grid_per_axis, rows_per_chunk):
        x1 = axis[lo:lo + rows_per_chunk][:, None]
        res = np.max(np.abs(strong_coupling_system_residual(x1, axis[None, :])), axis=0)
        i, j = np.unravel_index(int(np.argmin(res)), res.shape)
        if res[i, j] < best_val:
            best_val = float(res[i, j])
            best_pt = (float(x1[i, 0]), float(axis[j]))
    return best_val, np.array(best_pt)


def _ks_uniform(column):
    xs = np.sort(column)
    n = xs.shape[0]
    grid_hi = np.arange(1, n + 1) / n
    grid_lo = np.arange(n) / n
    return float(max(np.max(grid_hi - xs), np.max(xs - grid_lo)))


def uniformity_check(fam, model, n, samples, seed):
    """KS distance of the time-n pushforward of uniform points to uniform.

    Each point gets its own independent noise path. Acceptance threshold
    is the 1% asymptotic KS quantile 1.63 / sqrt(samples).
    """
    if model.N != fam.N:
        raise ConfigError(
            f"noise model has N={model.N} but the family has N={fam.N}"
        )
    n = int(n)
    if n < 0:
        raise ConfigError("n cannot be negative")
    samples = int(samples)
    if samples <= 0:
        raise ConfigError("samples must be positive")
    d = 2 * fam.N
    rng = derive_stream(seed, 0)
    zs = rng.random((samples, d))
    if n > 0:
        if fam.kernel_code is None:
            for lo in range(samples):
                z = zs[lo].copy()
                vblock, ublock = draw_noise_block(rng, model, n)
                for i in range(n):
                    _, _, z = _step_jacobians(z, fam, model, vblock[i], ublock[i])
                zs[lo] = z
        else:
            fam_code, L, mu, amat = kernel_args(fam)
            noise_code, centers = kernel_noise_args(model)
            if model.variant == "Rotational":
                p = model.params.param_dim
            else:
                p = max(1, model.N)
            chunk = int(min(4096, max(64, _SAMPLE_CHUNK // max(1, n * p // 8))))
            for lo in range(0, samples, chunk):
                block = np.ascontiguousarray(zs[lo:lo + chunk])
                m = block.shape[0]
                vall = np.empty((m, n, 0))
                uall = np.empty((m, n, 0))
                for t in range(m):
                    vb, ub = draw_noise_block(rng, model, n)
                    if t == 0:
                        vall = np.empty((m,) + vb.shape)
                        uall = np.empty((m,) + ub.shape)
                    vall[t] = vb
                    uall[t] = ub
                _k.push_points_block(
                    block, fam_code, L, mu, amat, noise_code, centers,
                    vall, uall,
                )
                zs[lo:lo + chunk] = block
    stats = np.array([_ks_uniform(zs[:, j]) for j in range(d)])
    threshold = KS_COEFF_1PCT / np.sqrt(samples)
    return KSReport(
        statistics=stats,
        threshold=float(threshold),
        n_samples=samples,
        n_steps=n,
        passes=bool(np.all(stats <= threshold)),
    )
