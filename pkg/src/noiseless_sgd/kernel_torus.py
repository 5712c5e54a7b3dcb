"""Kernel SGD for interpolating a periodic function on the torus [0, 1)^d.

Functions are stored by their Fourier coefficients on the truncated lattice
``{-K..K}^d``; array index ``K + k_j`` along axis ``j`` holds frequency ``k_j``.
The kernel is translation invariant with Fourier coefficients
``t_hat(k) = (1 + |k|^2)^(-s/2 - d/4)``, so one SGD step on the sample ``u``
subtracts ``gamma * residual * t_hat(k) * exp(-2 pi i k.u)`` from every
coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng as rngmod
from .sgd_engine import DivergenceError, TraceRecord


@dataclass(frozen=True)
class TorusKernel:
    dim: int
    smoothness: float
    cutoff: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.smoothness > self.dim / 2:
            raise ValueError(f"kernel smoothness s={self.smoothness} must exceed d/2={self.dim / 2}")
        if self.cutoff < 1:
            raise ValueError("cutoff must be >= 1")

    @property
    def exponent(self) -> float:
        return self.smoothness / 2 + self.dim / 4

    def coeffs(self) -> np.ndarray:
        """``t_hat`` on the whole lattice."""
        return (1.0 + lattice_sq_norm(self.dim, self.cutoff)) ** (-self.exponent)

    def value_at_zero(self) -> float:
        """``t(0) = sum_k t_hat(k) = ||k(u, .)||^2``; plays the role of R0."""
        return float(np.sum(np.sort(self.coeffs(), axis=None)))


@dataclass(frozen=True)
class FourierFunction:
    dim: int
    cutoff: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (2 * self.cutoff + 1,) * self.dim:
            raise ValueError(f"coefficient array of shape {c.shape} does not match dim={self.dim}, K={self.cutoff}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        if not np.allclose(c, mirror(c).conj(), rtol=0, atol=1e-12 * max(1.0, float(np.abs(c).max()))):
            raise ValueError("coefficients are not Hermitian symmetric")
        object.__setattr__(self, "coeffs", c)

    def coeff(self, k) -> complex:
        idx = _index(k, self.dim, self.cutoff)
        return complex(self.coeffs[idx])

    @classmethod
    def zero(cls, dim: int, cutoff: int) -> "FourierFunction":
        return cls(dim, cutoff, np.zeros((2 * cutoff + 1,) * dim, dtype=complex))

    @classmethod
    def from_dict(cls, dim: int, cutoff: int, coeffs: dict) -> "FourierFunction":
        c = np.zeros((2 * cutoff + 1,) * dim, dtype=complex)
        for k, v in coeffs.items():
            c[_index(k, dim, cutoff)] = v
        return cls(dim, cutoff, c)

    def __sub__(self, other: "FourierFunction") -> "FourierFunction":
        _same_lattice(self, other)
        return FourierFunction(self.dim, self.cutoff, self.coeffs - other.coeffs)


@dataclass(frozen=True)
class TargetSpec:
    smoothness_r: float
    margin_eps: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not self.smoothness_r > 0:
            raise ValueError("smoothness_r must be > 0")
        if not self.margin_eps > 0:
            raise ValueError("margin_eps must be > 0")
        rngmod.check_seed(self.seed)


def _index(k, dim, cutoff):
    k = (k,) if np.isscalar(k) else tuple(k)
    if len(k) != dim or any(abs(int(kj)) > cutoff for kj in k):
        raise ValueError(f"frequency {k} outside the lattice {{-{cutoff}..{cutoff}}}^{dim}")
    return tuple(int(kj) + cutoff for kj in k)


def _same_lattice(f, g):
    if f.dim != g.dim or f.cutoff != g.cutoff:
        raise ValueError("functions live on different lattices")


def mirror(c: np.ndarray) -> np.ndarray:
    """Array of ``c(-k)``."""
    return c[(slice(None, None, -1),) * c.ndim]


def lattice_sq_norm(dim: int, cutoff: int) -> np.ndarray:
    """``|k|^2`` over the lattice."""
    k = np.arange(-cutoff, cutoff + 1, dtype=float) ** 2
    out = np.zeros((2 * cutoff + 1,) * dim)
    for j in range(dim):
        shape = [1] * dim
        shape[j] = -1
        out = out + k.reshape(shape)
    return out


def kernel_coeff(kernel: TorusKernel, k) -> float:
    """``t_hat(k) = (1 + |k|^2)^(-s/2 - d/4)``."""
    idx = _index(k, kernel.dim, kernel.cutoff)
    ksq = sum((i - kernel.cutoff) ** 2 for i in idx)
    return (1.0 + ksq) ** (-kernel.exponent)


def target_modulus(dim: int, cutoff: int, r: float, eps: float) -> np.ndarray:
    return (1.0 + lattice_sq_norm(dim, cutoff)) ** (-r / 2 - dim / 4 - eps / 2)


def make_target(spec: TargetSpec, dim: int, cutoff: int) -> FourierFunction:
    """Random real function of Sobolev smoothness just above ``r``.

    Coefficient moduli are ``(1 + |k|^2)^(-r/2 - d/4 - eps/2)`` and phases are
    uniform on the half lattice, completed by Hermitian symmetry. The constant
    coefficient is real and equal to 1.
    """
    mod = target_modulus(dim, cutoff, spec.smoothness_r, spec.margin_eps)
    gen = rngmod.stream(spec.seed, 0, rngmod.TARGET)
    phase = gen.uniform(0.0, 2.0 * np.pi, size=mod.shape)
    # the flattened lattice is symmetric about its centre: flat index j holds k
    # and size-1-j holds -k, so the first half is a half lattice
    flat = phase.ravel()
    centre = flat.size // 2
    flat[centre] = 0.0
    flat[centre + 1 :] = -flat[:centre][::-1]
    return FourierFunction(dim, cutoff, mod * np.exp(1j * phase))


def _plane_wave(dim: int, cutoff: int, u) -> np.ndarray:
    """``exp(2 pi i k.u)`` over the lattice."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (dim,):
        raise ValueError(f"point must have {dim} coordinates")
    k = np.arange(-cutoff, cutoff + 1)
    out = np.ones((1,) * dim, dtype=complex)
    for j in range(dim):
        shape = [1] * dim
        shape[j] = -1
        out = out * np.exp(2j * np.pi * k * u[j]).reshape(shape)
    return out


def evaluate(f: FourierFunction, u) -> float:
    """``f(u) = sum_k f_hat(k) exp(2 pi i k.u)``; the imaginary part cancels."""
    return float(np.sum(f.coeffs * _plane_wave(f.dim, f.cutoff, u)).real)


def kernel_sgd_step(f: FourierFunction, target: FourierFunction, kernel: TorusKernel, u, gamma: float) -> FourierFunction:
    _same_lattice(f, target)
    if kernel.dim != f.dim or kernel.cutoff != f.cutoff:
        raise ValueError("kernel lattice does not match the functions")
    w = _plane_wave(f.dim, f.cutoff, u)
    residual = float(np.sum((f.coeffs - target.coeffs) * w).real)
    return FourierFunction(f.dim, f.cutoff, f.coeffs - gamma * residual * kernel.coeffs() * w.conj())


def l2_error(f: FourierFunction, g: FourierFunction) -> float:
    """``||f - g||_{L^2}^2`` by Parseval."""
    _same_lattice(f, g)
    diff = f.coeffs - g.coeffs
    return float(np.sum(np.sort((diff * diff.conj()).real, axis=None)))


def sobolev_norm(f: FourierFunction, sprime: float) -> float:
    """Squared ``H^s'`` norm ``sum_k |f_hat(k)|^2 (1 + |k|^2)^s'`` over the lattice."""
    w = (1.0 + lattice_sq_norm(f.dim, f.cutoff)) ** sprime
    return float(np.sum(np.sort((np.abs(f.coeffs) ** 2 * w), axis=None)))


def rkhs_norm_sq(f: FourierFunction, kernel: TorusKernel) -> float:
    """``<f, Sigma^-1 f> = sum_k |f_hat(k)|^2 / t_hat(k)``."""
    return float(np.sum(np.abs(f.coeffs) ** 2 / kernel.coeffs()))


def tail_mass(spec: TargetSpec, dim: int, cutoff: int, extent: int = 64) -> float:
    """Squared L2 mass of the target modulus outside ``{-K..K}^d``.

    Summed exactly over the shell out to ``extent * K`` plus an integral bound
    for the remainder.
    """
    big = cutoff * extent
    full = target_modulus(dim, big, spec.smoothness_r, spec.margin_eps) ** 2
    inner = target_modulus(dim, cutoff, spec.smoothness_r, spec.margin_eps) ** 2
    p = spec.smoothness_r + dim / 2 + spec.margin_eps  # modulus^2 ~ |k|^-2p
    surface = 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)
    rest = surface * big ** (dim - 2 * p) / (2 * p - dim)
    return float(full.sum() - inner.sum() + rest)


def predicted_exponent(r: float, s: float, d: int) -> float:
    """Decay exponent of the RKHS error; the L2 risk decays one power faster.

    Valid for ``d/2 < s <= 2r - d/2``.
    """
    if not d / 2 < s <= 2 * r - d / 2:
        raise ValueError(f"s={s} outside the validity window d/2 < s <= 2r - d/2 = ({d / 2}, {2 * r - d / 2}]")
    h = s + d / 2
    return min(2 * r / h - 1, 1 - d / h)


def run_kernel_sgd(
    kernel: TorusKernel,
    target: FourierFunction,
    gamma: float | None,
    iters: int,
    seed: int,
    checkpoints: Sequence[int],
    replicate: int = 0,
) -> list[TraceRecord]:
    """One realization of kernel SGD from ``f_0 = 0``.

    ``risk`` is ``0.5 * ||f_n - f_*||_{L^2}^2`` and ``recon_sq`` the squared
    RKHS norm of ``f_n - f_*``. ``gamma=None`` selects ``1 / t(0)``.
    """
    if kernel.dim != target.dim or kernel.cutoff != target.cutoff:
        raise ValueError("kernel lattice does not match the target")
    t_hat = kernel.coeffs().ravel()
    gamma = 1.0 / kernel.value_at_zero() if gamma is None else float(gamma)
    dim, K = kernel.dim, kernel.cutoff
    err = -target.coeffs.ravel().copy()
    sym = mirror(np.arange(err.size).reshape(target.coeffs.shape)).ravel()
    points = rngmod.stream(seed, replicate, rngmod.POINTS)
    k = np.arange(-K, K + 1)

    def risk_of(e):
        return 0.5 * float(np.sum((e * e.conj()).real))

    out = []
    risk = risk_of(err)
    min_risk = risk
    step = 0
    cps = list(checkpoints)
    if any(b <= a for a, b in zip(cps, cps[1:])) or (cps and (cps[0] < 0 or cps[-1] > iters)):
        raise ValueError("checkpoints must be strictly increasing within [0, iters]")
    for cp in cps:
        while step < cp:
            u = points.random(dim)
            w = np.ones(1, dtype=complex)
            for j in range(dim):
                w = np.multiply.outer(w, np.exp(2j * np.pi * k * u[j])).ravel()
            residual = float(np.dot(err, w).real)
            err -= gamma * residual * t_hat * w.conj()
            step += 1
            risk = risk_of(err)
            if not math.isfinite(risk):
                raise DivergenceError(step)
            min_risk = min(min_risk, risk)
        if not np.array_equal(err, err[sym].conj()):
            raise AssertionError(f"iterate lost Hermitian symmetry at step {step}")
        recon = float(np.sum((err * err.conj()).real / t_hat))
        out.append(TraceRecord(step, recon, risk, min_risk))
    return out
