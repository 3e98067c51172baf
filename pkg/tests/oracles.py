"""Independent oracles used to pin expected values before implementation.

Nothing in this module imports the library under test. Each helper is a
small, direct computation of a quantity the library must reproduce.
"""

import math

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.stats

TWO_PI = 2.0 * math.pi

# log of the top eigenvalue of [[3,-1],[1,0]]: the exact top Lyapunov
# exponent of the constant cocycle with A = [3]
LOG_GOLDEN3 = 0.9624236501192069

# closed-form product-set measures
S2_AT_INV_E = 0.7357588823428847  # 2/e
S3_AT_001 = 0.16208966406944889  # 0.01 * (1 + ln 100 + (ln 100)^2 / 2)

# singular values of [[3,-1],[1,0]]
SIGMA_LINEAR3 = (3.302775637731995, 0.3027756377319946)

# \int_0^1 log|2 pi L cos(2 pi x)| dx = log(pi L); reference for L = 1e3
LOG_PI_L_1E3 = 8.052485164831538

# KS acceptance threshold at the 1% level, statistic < KS_COEFF_1PCT / sqrt(n)
KS_COEFF_1PCT = 1.63


def fd_jacobian(func, x, h=1e-6):
    """Central finite-difference Jacobian of func at x."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(func(x), dtype=float)
    jac = np.empty((f0.size, x.size))
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (np.asarray(func(xp)) - np.asarray(func(xm))) / (2.0 * h)
    return jac


def linear_block_exponents(amat):
    """Exact Lyapunov exponents of the constant cocycle [[A,-I],[I,0]].

    Sorted nonincreasing; valid when the block matrix has a full set of
    eigenvalues off the unit circle or on it (log|lambda| is used either way).
    """
    amat = np.asarray(amat, dtype=float)
    n = amat.shape[0]
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = amat
    block[:n, n:] = -np.eye(n)
    block[n:, :n] = np.eye(n)
    eig = np.linalg.eigvals(block)
    return np.sort(np.log(np.abs(eig)))[::-1]


def ks_uniform_statistic(samples):
    """One-sample KS statistic against U[0,1]."""
    return scipy.stats.kstest(np.asarray(samples, dtype=float), "uniform").statistic


def projector_gap(e_cols, f_cols):
    """Spectral norm of (I - Pi_F) Pi_E for orthonormal frames."""
    e_cols = np.asarray(e_cols, dtype=float)
    f_cols = np.asarray(f_cols, dtype=float)
    dim = e_cols.shape[0]
    pe = e_cols @ e_cols.T
    pf = f_cols @ f_cols.T
    return np.linalg.norm((np.eye(dim) - pf) @ pe, 2)


def column_space_frame(mat, tol=1e-12):
    """Orthonormal basis of the column space via SVD."""
    u, s, _ = np.linalg.svd(np.asarray(mat, dtype=float), full_matrices=False)
    rank = int(np.sum(s > tol * s[0]))
    return u[:, :rank]


def expm_reference(mat):
    """scipy's scaling-and-squaring matrix exponential."""
    return scipy.linalg.expm(np.asarray(mat, dtype=float))


def critical_measure_1d(L, beta):
    """Exact Leb{x in [0,1) : |2 + 2 pi L cos(2 pi x)| <= L**beta}.

    The set is {cos(2 pi x) in [a, b]} with a, b inside (-1, 1) for the
    parameter ranges used in tests; its measure is (arccos a - arccos b)/pi.
    """
    thr = L**beta
    a = max(-1.0, (-2.0 - thr) / (TWO_PI * L))
    b = min(1.0, (-2.0 + thr) / (TWO_PI * L))
    if b < a:
        return 0.0
    return (math.acos(a) - math.acos(b)) / math.pi


def product_set_measure_numeric(n_factors, delta):
    """Leb{x in [0,1]^N : prod x_i <= delta} by recursive quadrature.

    Independent of the closed form: S_1(d) = d and
    S_N(d) = integral_0^1 S_{N-1}(min(1, d/x)) dx.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")

    def s_rec(n, d):
        if d >= 1.0:
            return 1.0
        if n == 1:
            return d
        inner = scipy.integrate.quad(
            lambda x: s_rec(n - 1, min(1.0, d / x)), d, 1.0, limit=200
        )[0]
        return d + inner

    return s_rec(n_factors, float(delta))


def binomial_stderr(p_hat, n):
    """Standard error of a Monte Carlo fraction."""
    return math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / n)


def torus_distance(a, b):
    """Euclidean distance on the unit torus."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    d = np.minimum(d, 1.0 - d)
    return float(np.sqrt(np.sum(d * d)))
