"""Deterministic map families on the 2N-torus.

All families share the skew-product shape F(x, y) = (f(x) - y mod 1, x)
with x and y each N-dimensional and coordinates kept in [0,1). The block
Jacobian [[dxf, -I], [I, 0]] has determinant exactly 1 for every family,
which is what makes long products of these matrices trustworthy.

Variants:

* CoupledStandard: f_i = 2 x_i + L sin 2 pi x_i + sum_j mu_ij sin 2 pi (x_j - x_i),
  with mu symmetric and zero on the diagonal.
* StrongCoupling2: the N = 2 member with coupling strength equal to L itself.
* GenericLPsiPhi: f = L psi + phi for caller-supplied handles.
* LinearTest: f(x) = A x with integer A; its cocycle is constant, so the
  exact spectrum is known and everything downstream can be checked against it.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels as _k
from .exceptions import ConfigError, UnsupportedVariantError

VARIANTS = ("CoupledStandard", "StrongCoupling2", "GenericLPsiPhi", "LinearTest")


@dataclass(frozen=True, eq=False)
class MapFamily:
    """Descriptor of one deterministic family; immutable and thread-safe."""

    variant: str
    N: int
    L: float
    mu: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    psi: Optional[Callable] = None
    phi: Optional[Callable] = None
    jac_psi: Optional[Callable] = None
    jac_phi: Optional[Callable] = None
    # effective coupling matrix fed to the kernels (zeros when unused)
    mu_eff: np.ndarray = field(default=None, repr=False)
    amat: np.ndarray = field(default=None, repr=False)
    uses_fd_jacobian: bool = False

    @property
    def kernel_code(self):
        """Kernel dispatch code, or None when only the Python path applies."""
        if self.variant in ("CoupledStandard", "StrongCoupling2"):
            return _k.FAM_COUPLED
        if self.variant == "LinearTest":
            return _k.FAM_LINEAR
        return None


@dataclass(frozen=True)
class JacobianBlock:
    """Jacobian of the full map at a point: the x-block and the 2N x 2N assembly."""

    dxf: np.ndarray
    assembled: np.ndarray

    def inverse(self):
        """Exact inverse [[0, I], [-I, dxf]]; no linear solve involved."""
        n = self.dxf.shape[0]
        inv = np.zeros((2 * n, 2 * n))
        inv[:n, n:] = np.eye(n)
        inv[n:, :n] = -np.eye(n)
        inv[n:, n:] = self.dxf
        return inv


def _check_positive_n(N):
    if not isinstance(N, (int, np.integer)) or N < 1:
        raise ConfigError(f"N must be a positive integer, got {N!r}")


def _check_l(L):
    L = float(L)
    if not np.isfinite(L) or L < 1.0:
        raise ConfigError(f"L must be a real number >= 1, got {L!r}")
    return L


def coupled_standard(N, L, mu=None):
    """Coupled standard maps with coupling matrix mu (default uncoupled)."""
    _check_positive_n(N)
    L = _check_l(L)
    if mu is None:
        mu = np.zeros((N, N))
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (N, N):
        raise ConfigError(f"mu must have shape ({N}, {N}), got {mu.shape}")
    if not np.array_equal(mu, mu.T):
        raise ConfigError("mu must be symmetric")
    if np.any(np.diag(mu) != 0.0):
        raise ConfigError("mu must have zero diagonal")
    return MapFamily(
        variant="CoupledStandard", N=int(N), L=L, mu=mu,
        mu_eff=np.ascontiguousarray(mu), amat=np.zeros((N, N)),
    )


def strong_coupling2(L):
    """Two coupled standard maps whose coupling strength equals L."""
    L = _check_l(L)
    mu_eff = np.array([[0.0, L], [L, 0.0]])
    return MapFamily(
        variant="StrongCoupling2", N=2, L=L,
        mu_eff=mu_eff, amat=np.zeros((2, 2)),
    )


def generic_l_psi_phi(N, L, psi, phi, jac_psi=None, jac_phi=None):
    """f = L psi + phi for caller-supplied handles.

    psi and phi map an N-vector to an N-vector; jac_psi and jac_phi return
    the N x N Jacobians. When either Jacobian handle is missing, central
    finite differences stand in and the family is flagged accordingly so
    reports can surface the approximation.
    """
    _check_positive_n(N)
    L = _check_l(L)
    if not callable(psi) or not callable(phi):
        raise ConfigError("psi and phi must be callables")
    uses_fd = jac_psi is None or jac_phi is None
    return MapFamily(
        variant="GenericLPsiPhi", N=int(N), L=L,
        psi=psi, phi=phi, jac_psi=jac_psi, jac_phi=jac_phi,
        mu_eff=np.zeros((N, N)), amat=np.zeros((N, N)),
        uses_fd_jacobian=uses_fd,
    )


def linear_test(A):
    """Constant-cocycle family f(x) = A x with integer matrix A."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigError(f"A must be a square matrix, got shape {A.shape}")
    if not np.array_equal(A, np.round(A)):
        raise ConfigError("A must have integer entries")
    A = A.astype(np.float64)
    return MapFamily(
        variant="LinearTest", N=int(A.shape[0]), L=1.0, A=A,
        mu_eff=np.zeros(A.shape), amat=np.ascontiguousarray(A),
    )


def reduce_mod1(v):
    """Reduce coordinates to [0,1); an exact 1.0 collapses to 0.0."""
    v = np.asarray(v, dtype=np.float64)
    r = v - np.floor(v)
    return np.where(r == 1.0, 0.0, r)


def _as_x(x, fam):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (fam.N,):
        raise ConfigError(
            f"x must be a vector of length {fam.N}, got shape {x.shape}"
        )
    return x


def _as_z(z, fam):
    z = np.ascontiguousarray(z, dtype=np.float64)
    if z.shape != (2 * fam.N,):
        raise ConfigError(
            f"z must be a vector of length {2 * fam.N}, got shape {z.shape}"
        )
    return z


def _fd_jacobian(func, x, h=1e-6):
    n = x.shape[0]
    out = np.empty((n, n))
    for j in range(n):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        out[:, j] = (np.asarray(func(xp)) - np.asarray(func(xm))) / (2.0 * h)
    return out


def eval_f(x, fam):
    """f(x), un-reduced; the caller decides when to wrap mod 1."""
    x = _as_x(x, fam)
    code = fam.kernel_code
    if code is None:
        return fam.L * np.asarray(fam.psi(x), dtype=np.float64) + np.asarray(
            fam.phi(x), dtype=np.float64
        )
    out = np.empty(fam.N)
    _k.eval_f_into(out, x, code, fam.L, fam.mu_eff, fam.amat)
    return out


def jac_f(x, fam):
    """Analytic N x N Jacobian of f at x (finite differences only for
    GenericLPsiPhi handles that came without one)."""
    x = _as_x(x, fam)
    code = fam.kernel_code
    if code is None:
        if fam.jac_psi is not None and fam.jac_phi is not None:
            return fam.L * np.asarray(fam.jac_psi(x), dtype=np.float64) + np.asarray(
                fam.jac_phi(x), dtype=np.float64
            )
        return _fd_jacobian(lambda t: eval_f(t, fam), x)
    out = np.empty((fam.N, fam.N))
    _k.jac_f_into(out, x, code, fam.L, fam.mu_eff, fam.amat)
    return out


def jac_f_batch(xs, fam):
    """Jacobians at many points at once; xs has shape (M, N)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != fam.N:
        raise ConfigError(
            f"xs must have shape (M, {fam.N}), got {xs.shape}"
        )
    n = fam.N
    if fam.variant == "LinearTest":
        return np.broadcast_to(fam.amat, (xs.shape[0], n, n)).copy()
    if fam.kernel_code is None:
        return np.stack([jac_f(x, fam) for x in xs])
    # x_j - x_i in entry (m, i, j)
    xd = xs[:, None, :] - xs[:, :, None]
    cross = _k.TWO_PI * fam.mu_eff[None, :, :] * np.cos(_k.TWO_PI * xd)
    out = cross.copy()
    idx = np.arange(n)
    diag = 2.0 + _k.TWO_PI * fam.L * np.cos(_k.TWO_PI * xs)
    out[:, idx, idx] = diag - cross.sum(axis=2)
    return out


def eval_F(z, fam):
    """One step of the full map: (x, y) -> (f(x) - y mod 1, x)."""
    z = _as_z(z, fam)
    n = fam.N
    fx = eval_f(z[:n], fam)
    out = np.empty(2 * n)
    out[:n] = reduce_mod1(fx - z[n:])
    out[n:] = z[:n]
    return out


def eval_F_inverse(z, fam):
    """Closed-form inverse step: (x, y) -> (y, f(y) - x mod 1)."""
    z = _as_z(z, fam)
    n = fam.N
    fy = eval_f(z[n:], fam)
    out = np.empty(2 * n)
    out[:n] = z[n:]
    out[n:] = reduce_mod1(fy - z[:n])
    return out


def jac_F(z, fam):
    """Block Jacobian at z; depends on x only."""
    z = _as_z(z, fam)
    n = fam.N
    dxf = jac_f(z[:n], fam)
    assembled = np.zeros((2 * n, 2 * n))
    assembled[:n, :n] = dxf
    assembled[:n, n:] = -np.eye(n)
    assembled[n:, :n] = np.eye(n)
    return JacobianBlock(dxf=dxf, assembled=assembled)


def critical_threshold(fam, beta):
    """Determinant cutoff L^(N - (1 - beta)) separating the bad set."""
    if fam.variant == "LinearTest":
        raise UnsupportedVariantError(
            "LinearTest has no large-parameter critical set"
        )
    beta = float(beta)
    if not 0.0 < beta < 1.0:
        raise ConfigError(f"beta must lie in (0, 1), got {beta}")
    return fam.L ** (fam.N - (1.0 - beta))


def in_critical_set(x, fam, beta):
    """Whether |det jac_f(x)| falls at or below the critical cutoff.

    Accepts a single point (shape (N,)) or a batch (shape (M, N)); the
    batch form returns a boolean array.
    """
    thr = critical_threshold(fam, beta)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        d = np.linalg.det(jac_f(x, fam))
        return bool(abs(d) <= thr)
    dets = np.linalg.det(jac_f_batch(x, fam))
    return np.abs(dets) <= thr


def kernel_args(fam):
    """(fam_code, L, mu_eff, amat) tuple for the compiled kernels."""
    code = fam.kernel_code
    if code is None:
        raise UnsupportedVariantError(
            "GenericLPsiPhi runs through the Python path, not the kernels"
        )
    return code, fam.L, fam.mu_eff, fam.amat
