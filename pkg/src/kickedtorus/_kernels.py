"""Hot inner loops, compiled with numba by default.

Everything here is written against the numba-compilable subset of NumPy and
runs unchanged as plain Python when the pure-NumPy fallback is selected (see
``_backend``). Matrix sizes are tiny (2N rarely exceeds 8), so the kernels
use explicit loops instead of BLAS calls; per-call workspaces are allocated
once at kernel entry, never per step.

Layout conventions shared with the driver modules:

* points z live in [0,1)^{2N}, first N coordinates x, last N coordinates y;
* rotation parameters for one draw are packed as the strict upper triangles
  of the K skew matrices, concatenated center by center;
* a block of per-step noise comes as vblock (translations, one row per step)
  plus ublock (packed rotation parameters, one row per step).
"""

import numpy as np

from ._backend import maybe_njit

TWO_PI = 2.0 * np.pi

# family codes
FAM_COUPLED = 0
FAM_LINEAR = 2

# noise codes
NOISE_NONE = 0
NOISE_SHIFT = 1
NOISE_ROTATIONAL = 2

# bump radii: plateau up to R0, support up to R1
BUMP_R0 = 0.1
BUMP_R1 = 0.2
BUMP_INV_WIDTH = 1.0 / (BUMP_R1 - BUMP_R0)


@maybe_njit(cache=True, nogil=True)
def reduce01(t):
    """Reduce a scalar to [0,1); exact 1.0 clamps to 0.0."""
    r = t - np.floor(t)
    if r == 1.0:
        r = 0.0
    return r


@maybe_njit(cache=True, nogil=True)
def reduce01_into(v):
    for i in range(v.shape[0]):
        v[i] = reduce01(v[i])


@maybe_njit(cache=True, nogil=True)
def eval_f_into(out, x, fam_code, L, mu, amat):
    n = x.shape[0]
    if fam_code == FAM_LINEAR:
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += amat[i, j] * x[j]
            out[i] = acc
    else:
        for i in range(n):
            acc = 2.0 * x[i] + L * np.sin(TWO_PI * x[i])
            for j in range(n):
                if j != i:
                    acc += mu[i, j] * np.sin(TWO_PI * (x[j] - x[i]))
            out[i] = acc


@maybe_njit(cache=True, nogil=True)
def jac_f_into(out, x, fam_code, L, mu, amat):
    n = x.shape[0]
    if fam_code == FAM_LINEAR:
        for i in range(n):
            for j in range(n):
                out[i, j] = amat[i, j]
    else:
        for i in range(n):
            diag = 2.0 + TWO_PI * L * np.cos(TWO_PI * x[i])
            for j in range(n):
                if j != i:
                    c = TWO_PI * mu[i, j] * np.cos(TWO_PI * (x[j] - x[i]))
                    out[i, j] = c
                    diag -= c
            out[i, i] = diag


@maybe_njit(cache=True, nogil=True)
def assemble_jac_block_into(jf, dxf):
    """Fill jf with [[dxf, -I], [I, 0]]."""
    n = dxf.shape[0]
    for i in range(n):
        for j in range(n):
            jf[i, j] = dxf[i, j]
            jf[i, n + j] = -1.0 if i == j else 0.0
            jf[n + i, j] = 1.0 if i == j else 0.0
            jf[n + i, n + j] = 0.0


@maybe_njit(cache=True, nogil=True)
def eval_big_f_into(zout, fwork, z, fam_code, L, mu, amat):
    """zout = F(z) = (f(x) - y mod 1, x); zout must not alias z."""
    n = z.shape[0] // 2
    eval_f_into(fwork, z[:n], fam_code, L, mu, amat)
    for i in range(n):
        zout[i] = reduce01(fwork[i] - z[n + i])
        zout[n + i] = z[i]


@maybe_njit(cache=True, nogil=True)
def _g(t):
    if t <= 0.0:
        return 0.0
    return np.exp(-1.0 / t)


@maybe_njit(cache=True, nogil=True)
def _g_prime(t):
    if t <= 0.0:
        return 0.0
    return np.exp(-1.0 / t) / (t * t)


@maybe_njit(cache=True, nogil=True)
def bump_val(r):
    """Smooth profile: 1 on [0, 0.1], 0 on [0.2, inf)."""
    t = (BUMP_R1 - r) * BUMP_INV_WIDTH
    if t >= 1.0:
        return 1.0
    if t <= 0.0:
        return 0.0
    a = _g(t)
    b = _g(1.0 - t)
    return a / (a + b)


@maybe_njit(cache=True, nogil=True)
def bump_deriv(r):
    t = (BUMP_R1 - r) * BUMP_INV_WIDTH
    if t >= 1.0 or t <= 0.0:
        return 0.0
    a = _g(t)
    b = _g(1.0 - t)
    ap = _g_prime(t)
    bp = _g_prime(1.0 - t)
    ht = (ap * b + a * bp) / ((a + b) * (a + b))
    return -BUMP_INV_WIDTH * ht


@maybe_njit(cache=True, nogil=True)
def matmul_into(out, a, b):
    m = a.shape[0]
    kk = a.shape[1]
    n = b.shape[1]
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(kk):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc


@maybe_njit(cache=True, nogil=True)
def mat_copy_into(out, a):
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            out[i, j] = a[i, j]


@maybe_njit(cache=True, nogil=True)
def set_eye(a):
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            a[i, j] = 1.0 if i == j else 0.0


@maybe_njit(cache=True, nogil=True)
def skew_from_packed_into(out, params):
    """Skew matrix from its strict upper triangle, row-major order."""
    d = out.shape[0]
    idx = 0
    for i in range(d):
        out[i, i] = 0.0
        for j in range(i + 1, d):
            v = params[idx]
            out[i, j] = v
            out[j, i] = -v
            idx += 1


@maybe_njit(cache=True, nogil=True)
def expm_scaled_into(out, u, s, bwork, hwork):
    """out = exp(s * u) by scaling-and-squaring, degree-12 Taylor core.

    The argument is scaled by powers of 2 until its Frobenius norm is at
    most 2**-4; the Taylor truncation error is then far below 1e-12 and the
    result is deterministic across platforms.
    """
    d = u.shape[0]
    fro2 = 0.0
    for i in range(d):
        for j in range(d):
            t = s * u[i, j]
            fro2 += t * t
    fro = np.sqrt(fro2)
    nsq = 0
    scale = s
    while fro > 0.0625:
        fro *= 0.5
        scale *= 0.5
        nsq += 1
    for i in range(d):
        for j in range(d):
            bwork[i, j] = scale * u[i, j]
    # Horner: out = I + b (I + b/2 (I + ... (I + b/12)))
    set_eye(out)
    for k in range(12, 0, -1):
        matmul_into(hwork, bwork, out)
        inv_k = 1.0 / k
        for i in range(d):
            for j in range(d):
                out[i, j] = hwork[i, j] * inv_k + (1.0 if i == j else 0.0)
    for _ in range(nsq):
        matmul_into(hwork, out, out)
        mat_copy_into(out, hwork)


@maybe_njit(cache=True, nogil=True)
def torus_lift_into(delta, z, center):
    """delta = z - center lifted to [-1/2, 1/2)^d."""
    for i in range(z.shape[0]):
        t = z[i] - center[i] + 0.5
        t = reduce01(t)
        delta[i] = t - 0.5


@maybe_njit(cache=True, nogil=True)
def apply_noise_chain(
    z, centers, upar, v, want_jac, jac,
    delta, tvec, wvec, uskew, rot, w1, w2, fac, jtmp,
):
    """Apply the rotation chain center by center, then the translation.

    z is updated in place. When want_jac is nonzero, jac accumulates the
    chain-rule product of the per-center Jacobians, each evaluated at the
    point produced by the preceding factors (the translation contributes
    the identity).
    """
    d = z.shape[0]
    K = centers.shape[0]
    nu = (d * (d - 1)) // 2
    if want_jac != 0:
        set_eye(jac)
    for k in range(K):
        torus_lift_into(delta, z, centers[k])
        r2 = 0.0
        for i in range(d):
            r2 += delta[i] * delta[i]
        r = np.sqrt(r2)
        if r >= BUMP_R1:
            continue
        s = bump_val(r)
        skew_from_packed_into(uskew, upar[k * nu:(k + 1) * nu])
        expm_scaled_into(rot, uskew, s, w1, w2)
        if want_jac != 0:
            mat_copy_into(fac, rot)
            sp = bump_deriv(r)
            if sp != 0.0 and r > 0.0:
                for i in range(d):
                    acc = 0.0
                    for j in range(d):
                        acc += uskew[i, j] * delta[j]
                    tvec[i] = acc
                for i in range(d):
                    acc = 0.0
                    for j in range(d):
                        acc += rot[i, j] * tvec[j]
                    wvec[i] = acc
                inv_r = sp / r
                for i in range(d):
                    for j in range(d):
                        fac[i, j] += wvec[i] * delta[j] * inv_r
            matmul_into(jtmp, fac, jac)
            mat_copy_into(jac, jtmp)
        for i in range(d):
            acc = 0.0
            for j in range(d):
                acc += rot[i, j] * delta[j]
            tvec[i] = acc
        for i in range(d):
            z[i] = reduce01(centers[k, i] + tvec[i])
    for i in range(v.shape[0]):
        z[i] = reduce01(z[i] + v[i])


@maybe_njit(cache=True, nogil=True)
def mgs_into(q, logdiag):
    """In-place modified Gram-Schmidt with a second orthogonalization pass.

    logdiag[j] receives log of the residual norm of column j; the product
    of the norms is the absolute determinant factor of the update, and the
    diagonal is positive by construction.
    """
    m = q.shape[0]
    k = q.shape[1]
    for j in range(k):
        for _ in range(2):
            for i in range(j):
                dot = 0.0
                for t in range(m):
                    dot += q[t, i] * q[t, j]
                for t in range(m):
                    q[t, j] -= dot * q[t, i]
        nrm2 = 0.0
        for t in range(m):
            nrm2 += q[t, j] * q[t, j]
        nrm = np.sqrt(nrm2)
        logdiag[j] = np.log(nrm)
        if nrm > 0.0:
            inv = 1.0 / nrm
            for t in range(m):
                q[t, j] *= inv


@maybe_njit(cache=True, nogil=True)
def graph_norm_leading(q, nc, xbuf, ybuf):
    """Spectral norm of Y X^{-1} for the leading nc columns of q.

    X is the top N x nc block, Y the bottom. Returns inf when X is
    numerically singular (the subspace is not a graph over the x block).
    """
    nn = q.shape[0] // 2
    if nc == 1 and nn == 1:
        ax = abs(q[0, 0])
        if ax < 1e-300:
            return np.inf
        return abs(q[1, 0]) / ax
    for i in range(nn):
        for j in range(nc):
            xbuf[i, j] = q[i, j]
            ybuf[i, j] = q[nn + i, j]
    u, s, vt = np.linalg.svd(xbuf)
    if s[nn - 1] < 1e-12:
        return np.inf
    xin = np.linalg.inv(xbuf)
    g = ybuf @ xin
    u2, s2, vt2 = np.linalg.svd(g)
    return s2[0]


@maybe_njit(cache=True, nogil=True)
def run_block(
    z, q, fam_code, L, mu, amat,
    noise_code, centers, vblock, ublock,
    step_logs, want_gnorm, gnorm_out, det_thr, gbeta_out,
    err_out, sumlog_out, c0_out,
):
    """Advance vblock.shape[0] steps of the random composition.

    Per step: build the block Jacobian at the current point, move the point
    through the deterministic map and the noise, push the frame through the
    total Jacobian, re-orthonormalize via Gram-Schmidt (mandatory every
    step: Jacobian entries scale with L), and record the log diagonal.

    Outputs: step_logs rows get the per-step log diagonals; when want_gnorm
    is set, gnorm_out[i] gets the slope norm of the leading-N block of the
    post-step frame (inf when it is not a graph over x); when det_thr > 0,
    gbeta_out[i] flags |det dxf| > det_thr at the pre-step point;
    err_out[0] gets the step index of a determinant-drift violation (k=2N
    frames only, threshold 1e-6) or -1; sumlog_out[0] the max per-step
    |sum of logs| seen (k=2N); c0_out[0] the running max of |dxf|_F / L.
    """
    nn = z.shape[0] // 2
    two_n = 2 * nn
    k = q.shape[1]
    nsteps = vblock.shape[0]

    fwork = np.empty(nn)
    dxf = np.empty((nn, nn))
    jf = np.empty((two_n, two_n))
    jr = np.empty((two_n, two_n))
    mtot = np.empty((two_n, two_n))
    znew = np.empty(two_n)
    qnew = np.empty((two_n, k))
    logrow = np.empty(k)
    delta = np.empty(two_n)
    tvec = np.empty(two_n)
    wvec = np.empty(two_n)
    uskew = np.empty((two_n, two_n))
    rot = np.empty((two_n, two_n))
    w1 = np.empty((two_n, two_n))
    w2 = np.empty((two_n, two_n))
    fac = np.empty((two_n, two_n))
    jtmp = np.empty((two_n, two_n))
    xbuf = np.empty((nn, nn))
    ybuf = np.empty((nn, nn))

    err_out[0] = -1.0
    for i in range(nsteps):
        jac_f_into(dxf, z[:nn], fam_code, L, mu, amat)
        if det_thr > 0.0:
            gbeta_out[i] = 1 if abs(np.linalg.det(dxf)) > det_thr else 0
        if fam_code != FAM_LINEAR:
            fro2 = 0.0
            for a in range(nn):
                for b in range(nn):
                    fro2 += dxf[a, b] * dxf[a, b]
            ratio = np.sqrt(fro2) / L
            if ratio > c0_out[0]:
                c0_out[0] = ratio
        assemble_jac_block_into(jf, dxf)
        eval_big_f_into(znew, fwork, z, fam_code, L, mu, amat)
        if noise_code == NOISE_ROTATIONAL:
            apply_noise_chain(
                znew, centers, ublock[i], vblock[i], 1, jr,
                delta, tvec, wvec, uskew, rot, w1, w2, fac, jtmp,
            )
            matmul_into(mtot, jr, jf)
        elif noise_code == NOISE_SHIFT:
            for t in range(vblock.shape[1]):
                znew[t] = reduce01(znew[t] + vblock[i, t])
            mat_copy_into(mtot, jf)
        else:
            mat_copy_into(mtot, jf)
        matmul_into(qnew, mtot, q)
        mat_copy_into(q, qnew)
        mgs_into(q, logrow)
        for t in range(k):
            step_logs[i, t] = logrow[t]
        if k == two_n:
            ssum = 0.0
            for t in range(k):
                ssum += logrow[t]
            asum = abs(ssum)
            if asum > sumlog_out[0]:
                sumlog_out[0] = asum
            if asum > 1e-6:
                err_out[0] = i
                err_out[1] = asum
                return
        if want_gnorm != 0:
            gnorm_out[i] = graph_norm_leading(q, nn, xbuf, ybuf)
        for t in range(two_n):
            z[t] = znew[t]


@maybe_njit(cache=True, nogil=True)
def push_points_block(
    zs, fam_code, L, mu, amat, noise_code, centers, vall, uall,
):
    """Advance each row of zs through n steps of the point dynamics.

    vall has shape (trials, n, dv) and uall (trials, n, K*nu); row t carries
    the noise path of trajectory t.
    """
    trials = zs.shape[0]
    nsteps = vall.shape[1]
    two_n = zs.shape[1]
    nn = two_n // 2

    fwork = np.empty(nn)
    znew = np.empty(two_n)
    delta = np.empty(two_n)
    tvec = np.empty(two_n)
    wvec = np.empty(two_n)
    uskew = np.empty((two_n, two_n))
    rot = np.empty((two_n, two_n))
    w1 = np.empty((two_n, two_n))
    w2 = np.empty((two_n, two_n))
    fac = np.empty((two_n, two_n))
    jtmp = np.empty((two_n, two_n))
    jr = np.empty((two_n, two_n))

    for t in range(trials):
        for i in range(nsteps):
            eval_big_f_into(znew, fwork, zs[t], fam_code, L, mu, amat)
            if noise_code == NOISE_ROTATIONAL:
                apply_noise_chain(
                    znew, centers, uall[t, i], vall[t, i], 0, jr,
                    delta, tvec, wvec, uskew, rot, w1, w2, fac, jtmp,
                )
            elif noise_code == NOISE_SHIFT:
                for a in range(vall.shape[2]):
                    znew[a] = reduce01(znew[a] + vall[t, i, a])
            for a in range(two_n):
                zs[t, a] = znew[a]


@maybe_njit(cache=True, nogil=True)
def gbeta_window_accept(
    zcand, vpath, upath, fam_code, L, mu, amat, noise_code, centers, det_thr, nsteps,
):
    """Index of the first candidate whose window stays out of the critical set.

    A candidate is accepted when |det dxf| > det_thr at each of the nsteps
    visited points Z_0 .. Z_{nsteps-1} under the given noise path. Returns
    -1 when no candidate passes.
    """
    ncand = zcand.shape[0]
    two_n = zcand.shape[1]
    nn = two_n // 2

    fwork = np.empty(nn)
    dxf = np.empty((nn, nn))
    z = np.empty(two_n)
    znew = np.empty(two_n)
    delta = np.empty(two_n)
    tvec = np.empty(two_n)
    wvec = np.empty(two_n)
    uskew = np.empty((two_n, two_n))
    rot = np.empty((two_n, two_n))
    w1 = np.empty((two_n, two_n))
    w2 = np.empty((two_n, two_n))
    fac = np.empty((two_n, two_n))
    jtmp = np.empty((two_n, two_n))
    jr = np.empty((two_n, two_n))

    for c in range(ncand):
        for a in range(two_n):
            z[a] = zcand[c, a]
        ok = True
        for i in range(nsteps):
            jac_f_into(dxf, z[:nn], fam_code, L, mu, amat)
            if abs(np.linalg.det(dxf)) <= det_thr:
                ok = False
                break
            eval_big_f_into(znew, fwork, z, fam_code, L, mu, amat)
            if noise_code == NOISE_ROTATIONAL:
                apply_noise_chain(
                    znew, centers, upath[i], vpath[i], 0, jr,
                    delta, tvec, wvec, uskew, rot, w1, w2, fac, jtmp,
                )
            elif noise_code == NOISE_SHIFT:
                for a in range(vpath.shape[1]):
                    znew[a] = reduce01(znew[a] + vpath[i, a])
            for a in range(two_n):
                z[a] = znew[a]
        if ok:
            return c
    return -1


@maybe_njit(cache=True, nogil=True)
def step_with_jacs(
    z, jf, jr, fam_code, L, mu, amat, noise_code, centers, v, upar,
):
    """One full step: fills jf (block Jacobian at z) and jr (noise
    Jacobian along the intermediate point), advancing z in place."""
    two_n = z.shape[0]
    nn = two_n // 2
    fwork = np.empty(nn)
    dxf = np.empty((nn, nn))
    znew = np.empty(two_n)
    delta = np.empty(two_n)
    tvec = np.empty(two_n)
    wvec = np.empty(two_n)
    uskew = np.empty((two_n, two_n))
    rot = np.empty((two_n, two_n))
    w1 = np.empty((two_n, two_n))
    w2 = np.empty((two_n, two_n))
    fac = np.empty((two_n, two_n))
    jtmp = np.empty((two_n, two_n))

    jac_f_into(dxf, z[:nn], fam_code, L, mu, amat)
    assemble_jac_block_into(jf, dxf)
    eval_big_f_into(znew, fwork, z, fam_code, L, mu, amat)
    set_eye(jr)
    if noise_code == NOISE_ROTATIONAL:
        apply_noise_chain(
            znew, centers, upar, v, 1, jr,
            delta, tvec, wvec, uskew, rot, w1, w2, fac, jtmp,
        )
    elif noise_code == NOISE_SHIFT:
        for a in range(v.shape[0]):
            znew[a] = reduce01(znew[a] + v[a])
    for a in range(two_n):
        z[a] = znew[a]


@maybe_njit(cache=True, nogil=True)
def cone_condition_trials(zs, gmats, samples, centers, out):
    """Condition checks for the noise Jacobian on random inputs.

    Per trial t: jac = D R at zs[t] for the packed sample samples[t]
    (translation first d entries, rotations after), then out[t] =
    (|jac|_2, |jac^{-1}|_2, graph norm of jac(graph(gmats[t]))).
    """
    trials = zs.shape[0]
    d = zs.shape[1]
    nn = d // 2

    z = np.empty(d)
    jac = np.empty((d, d))
    delta = np.empty(d)
    tvec = np.empty(d)
    wvec = np.empty(d)
    uskew = np.empty((d, d))
    rot = np.empty((d, d))
    w1 = np.empty((d, d))
    w2 = np.empty((d, d))
    fac = np.empty((d, d))
    jtmp = np.empty((d, d))
    bcols = np.empty((d, nn))
    xbuf = np.empty((nn, nn))
    ybuf = np.empty((nn, nn))

    for t in range(trials):
        for a in range(d):
            z[a] = zs[t, a]
        apply_noise_chain(
            z, centers, samples[t, d:], samples[t, :d], 1, jac,
            delta, tvec, wvec, uskew, rot, w1, w2, fac, jtmp,
        )
        u, s, vt = np.linalg.svd(jac)
        out[t, 0] = s[0]
        out[t, 1] = 1.0 / s[d - 1]
        # image of the graph frame [[I],[G]]
        for i in range(d):
            for j in range(nn):
                acc = jac[i, j]
                for a in range(nn):
                    acc += jac[i, nn + a] * gmats[t, a, j]
                bcols[i, j] = acc
        out[t, 2] = graph_norm_leading(bcols, nn, xbuf, ybuf)


@maybe_njit(cache=True, nogil=True)
def cone_condition_worst(zs, samples, centers, slope_cap, out):
    """Per-sample norms with the slope direction maximized analytically.

    For jac = [[A, B], [C, D]] the image slope of any graph with norm at
    most slope_cap obeys |G'| <= (|C| + cap |D|) / (smin(A) - cap |B|), so
    out[t] = (|jac|_2, |jac^{-1}|_2, that bound) dominates every sampled
    (z, G, omega) statistic at the same (z, omega).
    """
    trials = zs.shape[0]
    d = zs.shape[1]
    nn = d // 2

    z = np.empty(d)
    jac = np.empty((d, d))
    delta = np.empty(d)
    tvec = np.empty(d)
    wvec = np.empty(d)
    uskew = np.empty((d, d))
    rot = np.empty((d, d))
    w1 = np.empty((d, d))
    w2 = np.empty((d, d))
    fac = np.empty((d, d))
    jtmp = np.empty((d, d))
    blk = np.empty((nn, nn))

    for t in range(trials):
        for a in range(d):
            z[a] = zs[t, a]
        apply_noise_chain(
            z, centers, samples[t, d:], samples[t, :d], 1, jac,
            delta, tvec, wvec, uskew, rot, w1, w2, fac, jtmp,
        )
        u, s, vt = np.linalg.svd(jac)
        out[t, 0] = s[0]
        out[t, 1] = 1.0 / s[d - 1]
        for i in range(nn):
            for j in range(nn):
                blk[i, j] = jac[i, j]
        ua, sa, va = np.linalg.svd(blk)
        amin = sa[nn - 1]
        for i in range(nn):
            for j in range(nn):
                blk[i, j] = jac[i, nn + j]
        ub, sb, vb = np.linalg.svd(blk)
        bmax = sb[0]
        for i in range(nn):
            for j in range(nn):
                blk[i, j] = jac[nn + i, j]
        uc, sc, vc = np.linalg.svd(blk)
        cmax = sc[0]
        for i in range(nn):
            for j in range(nn):
                blk[i, j] = jac[nn + i, nn + j]
        ud, sd, vd = np.linalg.svd(blk)
        dmax = sd[0]
        den = amin - slope_cap * bmax
        if den <= 0.0:
            out[t, 2] = np.inf
        else:
            out[t, 2] = (cmax + slope_cap * dmax) / den


@maybe_njit(cache=True, nogil=True)
def nd_spread_block(z0, ecols, samples, centers, disp_out, ang_out):
    """Image displacements and subspace rotation angles for fixed (z0, E).

    disp_out[t] gets the lifted displacement R(z0) - z0; ang_out[t] the
    largest principal angle between D R(E) and E.
    """
    trials = samples.shape[0]
    d = z0.shape[0]
    kc = ecols.shape[1]

    z = np.empty(d)
    jac = np.empty((d, d))
    delta = np.empty(d)
    tvec = np.empty(d)
    wvec = np.empty(d)
    uskew = np.empty((d, d))
    rot = np.empty((d, d))
    w1 = np.empty((d, d))
    w2 = np.empty((d, d))
    fac = np.empty((d, d))
    jtmp = np.empty((d, d))
    img = np.empty((d, kc))
    logrow = np.empty(kc)
    cosm = np.empty((kc, kc))

    for t in range(trials):
        for a in range(d):
            z[a] = z0[a]
        apply_noise_chain(
            z, centers, samples[t, d:], samples[t, :d], 1, jac,
            delta, tvec, wvec, uskew, rot, w1, w2, fac, jtmp,
        )
        torus_lift_into(delta, z, z0)
        for a in range(d):
            disp_out[t, a] = delta[a]
        matmul_into(img, jac, ecols)
        mgs_into(img, logrow)
        for i in range(kc):
            for j in range(kc):
                acc = 0.0
                for a in range(d):
                    acc += ecols[a, i] * img[a, j]
                cosm[i, j] = acc
        u, s, vt = np.linalg.svd(cosm)
        cmin = s[kc - 1]
        if cmin > 1.0:
            cmin = 1.0
        if cmin < -1.0:
            cmin = -1.0
        ang_out[t] = np.arccos(cmin)
