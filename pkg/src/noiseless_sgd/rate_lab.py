"""Checkpoint schedules, Monte-Carlo averaging and log-log exponent fits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .sgd_engine import TraceRecord

KINDS = ("log-spaced", "linear", "every-step")


@dataclass(frozen=True)
class CheckpointSchedule:
    points: tuple
    kind: str = "log-spaced"

    def __post_init__(self):
        pts = tuple(int(p) for p in self.points)
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("checkpoints must be strictly increasing")
        if pts and pts[0] < 0:
            raise ValueError("checkpoints must be >= 0")
        object.__setattr__(self, "points", pts)

    def check(self, iters: int) -> "CheckpointSchedule":
        if self.points and self.points[-1] > iters:
            raise ValueError(f"last checkpoint {self.points[-1]} exceeds iters={iters}")
        return self

    def with_zero(self) -> "CheckpointSchedule":
        if self.points and self.points[0] == 0:
            return self
        return CheckpointSchedule((0,) + self.points, self.kind)

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


def log_schedule(iters: int, per_decade: int) -> CheckpointSchedule:
    """Geometrically spaced integer checkpoints from 1 to ``iters`` inclusive.

    Below ``per_decade`` the geometric grid is nearly dense, so every integer
    up to ``per_decade`` is included.
    """
    if iters < 10:
        raise ValueError("iters must be >= 10")
    if per_decade < 1:
        raise ValueError("per_decade must be >= 1")
    count = int(math.ceil(math.log10(iters) * per_decade)) + 1
    raw = np.rint(np.logspace(0.0, math.log10(iters), count)).astype(np.int64)
    dense = np.arange(1, min(per_decade, iters) + 1)
    pts = np.unique(np.concatenate([dense, raw, [iters]]))
    return CheckpointSchedule(tuple(int(p) for p in pts), "log-spaced")


def linear_schedule(iters: int, every: int) -> CheckpointSchedule:
    if every < 1:
        raise ValueError("every must be >= 1")
    pts = sorted(set(range(0, iters + 1, every)) | {iters})
    return CheckpointSchedule(tuple(pts), "every-step" if every == 1 else "linear")


@dataclass
class MeanTrace:
    """Per-checkpoint replicate means and standard errors of every column."""

    steps: np.ndarray
    columns: dict  # name -> (mean array, stderr array)
    replicates: int
    t_rescaled: np.ndarray | None = None

    def mean(self, name: str) -> np.ndarray:
        return self.columns[name][0]

    def stderr(self, name: str) -> np.ndarray:
        return self.columns[name][1]

    def pairs(self, name: str, x: str = "step"):
        xs = self.steps if x == "step" else self.t_rescaled
        return list(zip(xs.tolist(), self.mean(name).tolist()))


def trace_columns(trace: Sequence[TraceRecord]) -> dict:
    cols = {
        "recon_sq": np.array([r.recon_sq for r in trace]),
        "risk": np.array([r.risk for r in trace]),
        "min_risk": np.array([r.min_risk for r in trace]),
    }
    keys = list(trace[0].phi) if trace else []
    for b in keys:
        cols[f"phi_{b:g}"] = np.array([r.phi[b] for r in trace])
    return cols


def mc_average(traces: Sequence[Sequence[TraceRecord]]) -> MeanTrace:
    """Sample mean and standard error (``std(ddof=1)/sqrt(m)``) per checkpoint."""
    if not traces:
        raise ValueError("need at least one trace")
    steps = np.array([r.step for r in traces[0]])
    for tr in traces[1:]:
        if len(tr) != len(steps) or any(r.step != s for r, s in zip(tr, steps)):
            raise ValueError("traces are not aligned on the same checkpoints")
        if tr and list(tr[0].phi) != list(traces[0][0].phi):
            raise ValueError("traces carry different phi columns")
    per = [trace_columns(tr) for tr in traces]
    m = len(traces)
    out = {}
    for name in per[0]:
        stack = np.stack([p[name] for p in per])
        mean = stack.mean(axis=0)
        se = stack.std(axis=0, ddof=1) / math.sqrt(m) if m > 1 else np.zeros_like(mean)
        out[name] = (mean, se)
    t = traces[0][0].t_rescaled if traces[0] else None
    t_res = np.array([r.t_rescaled for r in traces[0]]) if t is not None else None
    return MeanTrace(steps, out, m, t_res)


@dataclass(frozen=True)
class FitResult:
    exponent: float
    intercept: float
    r_squared: float
    window: tuple
    points: int


def fit_exponent(trace, window=(0.5, 1.0), bounds=None) -> FitResult:
    """Least-squares line through ``(log n, log value)``; ``exponent = -slope``.

    Parameters
    ----------
    trace : sequence of (n, value) pairs
        Points with ``n <= 0`` are ignored (they have no logarithm).
    window : (float, float)
        Fractions of the log-range of ``n`` to keep; ``(0.5, 1.0)`` is the
        last half in log scale.
    bounds : (float, float), optional
        Absolute ``[n_min, n_max]`` to keep instead of ``window``.
    """
    arr = np.asarray(trace, dtype=float).reshape(-1, 2)
    arr = arr[arr[:, 0] > 0]
    if len(arr) == 0:
        raise ValueError("trace has no points with n > 0")
    ln = np.log(arr[:, 0])
    if bounds is not None:
        lo, hi = math.log(bounds[0]), math.log(bounds[1])
    else:
        a, b = window
        if not 0.0 <= a < b <= 1.0:
            raise ValueError("window must satisfy 0 <= lo < hi <= 1")
        span = ln.max() - ln.min()
        lo, hi = ln.min() + a * span, ln.min() + b * span
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    keep = (ln >= lo - tol) & (ln <= hi + tol)
    x = ln[keep]
    y = arr[keep, 1]
    if len(x) < 3:
        raise ValueError(f"only {len(x)} points in the fit window; need >= 3")
    if np.any(~(y > 0)) or not np.all(np.isfinite(y)):
        raise ValueError("non-positive or non-finite values in the fit window; shrink the window")
    ly = np.log(y)
    xm, ym = x.mean(), ly.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (ly - ym)) / sxx)
    intercept = float(ym - slope * xm)
    ss_tot = float(np.sum((ly - ym) ** 2))
    ss_res = float(np.sum((ly - intercept - slope * x) ** 2))
    # residuals at rounding level mean a perfect fit, even when ss_tot is
    # itself rounding noise (flat traces)
    rounding = len(x) * (64 * np.finfo(float).eps * max(1.0, float(np.abs(ly).max()))) ** 2
    r2 = 1.0 if ss_res <= rounding else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    n_used = arr[keep, 0]
    return FitResult(-slope, intercept, r2, (float(n_used.min()), float(n_used.max())), int(len(x)))


def gaussian_predicted_exponent(beta_spec: float, delta: float) -> float:
    """``min(1 - 1/beta, (2 delta - 1)/beta)`` for a power-law problem."""
    if not beta_spec > 1:
        raise ValueError("beta_spec must be > 1 for a trace-class covariance")
    if not delta >= 0.5:
        raise ValueError("delta must be >= 1/2")
    return min(1.0 - 1.0 / beta_spec, (2.0 * delta - 1.0) / beta_spec)


@dataclass(frozen=True)
class TheoryReport:
    quantity: str
    predicted: float
    fit: FitResult
    tolerance: float
    verdict: str

    def to_json(self) -> dict:
        return {
            "quantity": self.quantity,
            "predicted": self.predicted,
            "fitted_exponent": self.fit.exponent,
            "r_squared": self.fit.r_squared,
            "window": list(self.fit.window),
            "tolerance": self.tolerance,
            "verdict": self.verdict,
        }

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def line(self) -> str:
        return (
            f"{self.quantity}: fitted {self.fit.exponent:.4f} vs predicted {self.predicted:.4f} "
            f"(tol {self.tolerance:g}, r2 {self.fit.r_squared:.4f}, window {self.fit.window[0]:g}..{self.fit.window[1]:g}) "
            f"-> {self.verdict.upper()}"
        )


def compare(fit: FitResult, predicted: float, tolerance: float, quantity: str = "exponent") -> TheoryReport:
    """Two-sided check ``|fitted - predicted| <= tolerance`` (closed)."""
    if not tolerance > 0:
        raise ValueError("tolerance must be > 0")
    # round away representation noise so that |diff| == tol passes regardless of sign
    diff = round(abs(fit.exponent - predicted), 12)
    verdict = "pass" if diff <= round(tolerance, 12) else "fail"
    return TheoryReport(quantity, float(predicted), fit, float(tolerance), verdict)


def report_dict(reports: Sequence[TheoryReport]) -> list:
    return [r.to_json() for r in reports]


def fit_as_dict(fit: FitResult) -> dict:
    return asdict(fit)
