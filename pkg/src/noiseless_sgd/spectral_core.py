"""Diagonal covariance models and power norms.

All vectors are coordinates in the eigenbasis of the covariance operator, so a
covariance is fully described by its (non-increasing, positive) eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues ``lambda_1 >= ... >= lambda_d > 0`` of a covariance."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        lam = np.array(self.eigenvalues, dtype=float).ravel()
        if lam.size == 0:
            raise ValueError("spectrum must have at least one eigenvalue")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise ValueError("eigenvalues must be finite and strictly positive")
        if np.any(np.diff(lam) > 0):
            raise ValueError("eigenvalues must be in non-increasing order")
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def top(self) -> float:
        return float(self.eigenvalues[0])

    def __len__(self):
        return self.dim


@dataclass(frozen=True)
class RegularityEstimate:
    beta: float
    value: float
    stderr: float
    replicates: int


def power_law_spectrum(dim: int, decay: float) -> Spectrum:
    """``lambda_i = i^-decay`` for ``i = 1..dim``."""
    i = np.arange(1, dim + 1, dtype=float)
    return Spectrum(i ** (-float(decay)))


def power_law_vector(dim: int, decay: float) -> np.ndarray:
    """Coordinates ``i^-decay``, the usual optimum for power-law problems."""
    i = np.arange(1, dim + 1, dtype=float)
    return i ** (-float(decay))


def as_eigenvector(spec: Spectrum, v) -> np.ndarray:
    """Validate ``v`` as a coordinate vector paired with ``spec``."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != spec.dim:
        raise ValueError(f"vector of length {v.shape[-1]} paired with spectrum of dim {spec.dim}")
    return v


def _ascending_sum(terms: np.ndarray) -> float:
    # smallest magnitude first; power-law tails otherwise lose digits
    terms = np.asarray(terms, dtype=float)
    return float(np.sum(terms[np.argsort(np.abs(terms), kind="stable")]))


def power_norm(spec: Spectrum, v, beta: float) -> float:
    """Return ``<v, Sigma^-beta v> = sum_i lambda_i^-beta v_i^2``."""
    v = as_eigenvector(spec, v)
    if v.ndim != 1:
        raise ValueError("power_norm expects a single vector; use power_norms for batches")
    if not np.isfinite(beta):
        raise ValueError("beta must be finite")
    return _ascending_sum(spec.eigenvalues ** (-beta) * v * v)


def power_norms(spec: Spectrum, vs, beta: float) -> np.ndarray:
    """Row-wise :func:`power_norm` for a ``(m, d)`` batch of vectors."""
    vs = np.atleast_2d(as_eigenvector(spec, vs))
    w = spec.eigenvalues ** (-beta)
    # eigenvalues are non-increasing, so for beta <= 0 weights grow with i;
    # summing columns in reverse keeps small terms first
    terms = w * vs * vs
    if beta <= 0:
        terms = terms[:, ::-1]
    return terms.sum(axis=1)


def gaussian_R0(spec: Spectrum) -> float:
    """``2 ||Sigma|| + Tr(Sigma)``: the fourth-moment constant for Gaussian features."""
    return 2.0 * spec.top + _ascending_sum(spec.eigenvalues)


def gaussian_Ralpha(spec: Spectrum, alpha: float) -> float:
    """``2 ||Sigma||^(1-alpha) + Tr(Sigma^(1-alpha))`` for ``alpha`` in [0, 1)."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    p = 1.0 - alpha
    return 2.0 * spec.top**p + _ascending_sum(spec.eigenvalues**p)


def estimate_regularity(errors: Sequence, spec: Spectrum, beta: float) -> RegularityEstimate:
    """Monte-Carlo estimate of the regularity function at ``beta``.

    Parameters
    ----------
    errors : sequence of vectors or (m, d) array
        Replicates of ``theta_n - theta_*``.
    spec : Spectrum
    beta : float

    Returns
    -------
    RegularityEstimate
        Sample mean of the power norms and its standard error (sample
        standard deviation over ``sqrt(m)``; zero for a single replicate).
    """
    errs = np.asarray(errors, dtype=float)
    if errs.size == 0:
        raise ValueError("need at least one error vector")
    vals = power_norms(spec, np.atleast_2d(errs), beta)
    m = vals.size
    se = float(np.std(vals, ddof=1) / np.sqrt(m)) if m > 1 else 0.0
    return RegularityEstimate(float(beta), float(np.mean(vals)), se, m)


def lemma1_rhs(spec: Spectrum, a_diag) -> np.ndarray:
    """Diagonal of ``2 Sigma A Sigma + Tr(Sigma A) Sigma`` for diagonal ``A``.

    This is ``E[<X, A X> X X^T]`` for ``X ~ N(0, Sigma)``.
    """
    a = as_eigenvector(spec, a_diag)
    lam = spec.eigenvalues
    trace = _ascending_sum(lam * a)
    if not np.isfinite(trace):
        raise ValueError("Tr(Sigma A) must be finite")
    return 2.0 * lam**2 * a + trace * lam
