"""Single-pass constant-step SGD on least squares with Gaussian features.

Iterates are tracked through the error ``e_n = theta_n - theta_*`` which obeys

    e_n = e_{n-1} - gamma * (<e_{n-1}, X_n> - sigma * Z_n) * X_n

with ``X_n = sqrt(lambda) * G_n`` in the covariance eigenbasis.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numba
import numpy as np

from . import rng as rngmod
from .spectral_core import (
    Spectrum,
    as_eigenvector,
    gaussian_R0,
    gaussian_Ralpha,
    power_law_spectrum,
    power_law_vector,
    power_norm,
)

# Gaussian draws are taken in fixed blocks of this many steps; part of the
# stream definition, changing it changes every trace.
BLOCK = 256


class DivergenceError(ArithmeticError):
    """A non-finite iterate appeared."""

    def __init__(self, step: int, what: str = "iterate"):
        super().__init__(f"non-finite {what} at step {step}")
        self.step = step


@dataclass(frozen=True)
class ProblemSpec:
    spectrum: Spectrum
    theta_star: np.ndarray
    noise_std: float = 0.0

    def __post_init__(self):
        ts = as_eigenvector(self.spectrum, self.theta_star).copy()
        if ts.ndim != 1 or not np.all(np.isfinite(ts)):
            raise ValueError("theta_star must be a finite vector")
        ts.setflags(write=False)
        object.__setattr__(self, "theta_star", ts)
        if not (self.noise_std >= 0 and math.isfinite(self.noise_std)):
            raise ValueError("noise_std must be finite and >= 0")

    @property
    def dim(self) -> int:
        return self.spectrum.dim

    @property
    def optimal_risk(self) -> float:
        """``R(theta_*)`` for independent additive noise of std ``noise_std``."""
        return 0.5 * self.noise_std**2


def power_law_problem(dim: int, spectral_decay: float, delta: float, noise_std: float = 0.0) -> ProblemSpec:
    """``Sigma = diag(i^-spectral_decay)``, ``theta_* = (i^-delta)_i``."""
    return ProblemSpec(power_law_spectrum(dim, spectral_decay), power_law_vector(dim, delta), noise_std)


@dataclass
class SgdConfig:
    iters: int
    seed: int = 0
    checkpoints: Sequence[int] | None = None
    betas: Sequence[float] = ()
    gamma: float | None = None  # None means 1/R0

    def __post_init__(self):
        if self.iters < 0:
            raise ValueError("iters must be >= 0")
        rngmod.check_seed(self.seed)
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        cps = [0] if self.checkpoints is None else [int(c) for c in self.checkpoints]
        if self.checkpoints is None and self.iters > 0:
            cps.append(self.iters)
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise ValueError("checkpoints must be strictly increasing")
        if cps and (cps[0] < 0 or cps[-1] > self.iters):
            raise ValueError("checkpoints must lie in [0, iters]")
        if not all(math.isfinite(b) for b in self.betas):
            raise ValueError("betas must be finite")
        self.checkpoints = cps
        self.betas = tuple(float(b) for b in self.betas)

    def step_size(self, problem: ProblemSpec) -> float:
        return self.gamma if self.gamma is not None else 1.0 / gaussian_R0(problem.spectrum)


@dataclass
class TraceRecord:
    step: int
    recon_sq: float
    risk: float
    min_risk: float
    phi: dict = field(default_factory=dict)
    t_rescaled: float | None = None


def sample_feature(spec: Spectrum, rng: np.random.Generator) -> np.ndarray:
    """One Gaussian feature ``X ~ N(0, Sigma)``."""
    return np.sqrt(spec.eigenvalues) * rng.standard_normal(spec.dim)


def sgd_step(theta, problem: ProblemSpec, x, z: float, gamma: float) -> np.ndarray:
    """One SGD step on the observation ``(x, <theta_*, x> + noise_std * z)``."""
    theta = as_eigenvector(problem.spectrum, theta)
    x = as_eigenvector(problem.spectrum, x)
    residual = float(np.dot(theta - problem.theta_star, x)) - problem.noise_std * z
    return theta - gamma * residual * x


def expected_iterate(problem: ProblemSpec, gamma: float, n: int) -> np.ndarray:
    """Mean iterate ``E[theta_n]``, i.e. gradient descent on the population risk."""
    if n < 0:
        raise ValueError("n must be >= 0")
    contraction = (1.0 - gamma * problem.spectrum.eigenvalues) ** int(n)
    return problem.theta_star * (1.0 - contraction)


@numba.njit(cache=True)
def _sgd_block(err, sq, lam, g, z, gamma, sigma, min_risk):
    # returns (rows done, last risk, running min); rows done < len(g) on divergence
    d = err.shape[0]
    risk = np.nan
    for k in range(g.shape[0]):
        r = 0.0
        for i in range(d):
            r += err[i] * sq[i] * g[k, i]
        r -= sigma * z[k]
        c = gamma * r
        risk = 0.0
        for i in range(d):
            err[i] -= c * sq[i] * g[k, i]
            risk += lam[i] * err[i] * err[i]
        risk *= 0.5
        if not np.isfinite(risk):
            return k, risk, min_risk
        if risk < min_risk:
            min_risk = risk
    return g.shape[0], risk, min_risk


def sgd_errors(
    problem: ProblemSpec,
    gamma: float,
    iters: int,
    seed: int,
    checkpoints: Sequence[int],
    replicate: int = 0,
    theta0=None,
) -> Iterator[tuple[int, np.ndarray, float, float]]:
    """Run SGD and yield ``(step, error, risk, min_risk)`` at each checkpoint.

    ``error`` is a copy of ``theta_n - theta_*``. ``min_risk`` is the minimum of
    the exact risk over every step so far, not only the checkpoints.
    """
    spec = problem.spectrum
    lam = spec.eigenvalues
    sq = np.sqrt(lam)
    theta0 = np.zeros(spec.dim) if theta0 is None else as_eigenvector(spec, theta0)
    err = np.array(theta0 - problem.theta_star, dtype=float)
    risk = 0.5 * float(np.sum(lam * err * err))
    min_risk = risk
    feats = rngmod.stream(seed, replicate, rngmod.FEATURES)
    noise = rngmod.stream(seed, replicate, rngmod.NOISE)
    sigma = float(problem.noise_std)

    step = 0
    g = np.empty((0, spec.dim))
    z = np.empty(0)
    pos = 0
    for cp in checkpoints:
        while step < cp:
            if pos == g.shape[0]:
                g = feats.standard_normal((BLOCK, spec.dim))
                z = noise.standard_normal(BLOCK) if sigma > 0 else np.zeros(BLOCK)
                pos = 0
            take = min(cp - step, g.shape[0] - pos)
            done, last, min_risk = _sgd_block(err, sq, lam, g[pos : pos + take], z[pos : pos + take], gamma, sigma, min_risk)
            if done < take:
                raise DivergenceError(step + done + 1)
            risk = last
            pos += take
            step += take
        yield step, err.copy(), float(risk), float(min_risk)


def run_sgd(problem: ProblemSpec, config: SgdConfig, replicate: int = 0, theta0=None) -> list[TraceRecord]:
    """Run one SGD realization and return its trace.

    Parameters
    ----------
    problem : ProblemSpec
    config : SgdConfig
        ``config.gamma=None`` selects ``1/R0``. A warning is emitted when the
        step size exceeds ``1/R0``.
    replicate : int
        Index of the independent stream derived from ``config.seed``.
    theta0 : array, optional
        Starting point, zero by default.

    Returns
    -------
    list of TraceRecord
        One record per checkpoint. ``phi`` holds single-replicate power norms
        of the error at ``config.betas``.
    """
    gamma = config.step_size(problem)
    r0 = gaussian_R0(problem.spectrum)
    if gamma > 1.0 / r0 * (1 + 1e-12):
        warnings.warn(f"step size {gamma:g} exceeds 1/R0 = {1 / r0:g}; upper bounds do not apply", stacklevel=2)
    out = []
    for step, err, risk, min_risk in sgd_errors(
        problem, gamma, config.iters, config.seed, config.checkpoints, replicate, theta0
    ):
        if not np.all(np.isfinite(err)):
            raise DivergenceError(step)
        phi = {b: power_norm(problem.spectrum, err, b) for b in config.betas}
        out.append(TraceRecord(step, float(np.dot(err, err)), risk, min_risk, phi))
    return out


def regularity_terms(problem: ProblemSpec, alpha: float) -> dict:
    """Inputs of the upper-bound constants for Gaussian features at regularity ``alpha``."""
    spec = problem.spectrum
    return {
        "alpha": alpha,
        "norm_alpha_sq": power_norm(spec, problem.theta_star, alpha),
        "norm_sq": power_norm(spec, problem.theta_star, 0.0),
        "r0": gaussian_R0(spec),
        "ralpha": gaussian_Ralpha(spec, alpha),
    }


def _alpha_pow(alpha, p):
    # alpha^p with the 0^0 = 1 convention
    return 1.0 if p == 0 else alpha**p


def theorem1_constants(alpha, gamma, norm_alpha_sq, norm_sq, r0, ralpha):
    """Constants ``(C, C')`` of the reconstruction and min-risk upper bounds.

    ``E||theta_n - theta_*||^2 <= C / n^alpha`` and
    ``min_k E R(theta_k) <= C' / n^(alpha+1)``.
    """
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    core = norm_alpha_sq + ralpha / r0 * norm_sq
    c = _alpha_pow(alpha, alpha) / gamma**alpha * core
    cp = 2.0**alpha * _alpha_pow(alpha, alpha) / gamma ** (alpha + 1) * core
    return c, cp


def general_constants(alpha, beta, gamma, norm_alpha_sq, norm_sq, r0, ralpha):
    """``(C(beta), C'(beta))`` of the power-norm bounds ``phi_n(beta) <~ n^-(alpha-beta)``."""
    core = norm_alpha_sq + ralpha / r0 * norm_sq
    c = _alpha_pow(alpha, alpha - beta) / gamma ** (alpha - beta) * core
    cp = 2.0 ** (alpha - beta) * _alpha_pow(alpha, alpha) / gamma ** (alpha - beta) * core
    return c, cp


def theorem5_excess_bound(Cp, alpha, n, r0, gamma, opt_risk):
    """Upper bound on ``min_k E[R(theta_k) - R(theta_*)]`` under misspecification."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 2.0 * Cp / n ** (alpha + 1) + 2.0 * r0 * gamma * opt_risk


def theorem6_bound(C_or_Cp, alpha, beta, n, r0, ralpha, gamma, opt_risk):
    """Misspecified bound on ``phi_n(beta)`` (``min_k phi_k`` when ``beta < 0``).

    Pass ``C(beta)`` for ``beta >= 0`` and ``C'(beta)`` for ``beta`` in [-1, 0).
    Only valid for ``-1 <= beta <= alpha - 1``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    if beta > alpha - 1 + 1e-12:
        raise ValueError(f"beta={beta} exceeds alpha-1={alpha - 1}: the bound does not hold there")
    if beta < -1:
        raise ValueError("beta must be >= -1")
    lam = (beta + 1) / alpha
    floor = 4.0 * r0 ** (1 - lam) * ralpha**lam * gamma * opt_risk
    return 2.0 * C_or_Cp / n ** (alpha - beta) + floor
