"""Invariant suite run by ``noiseless-sgd verify``.

Each check is deterministic given its seed and uses statistical slack sized so
that verdicts do not depend on the seed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import gossip as gsp
from . import kernel_torus as kt
from . import rate_lab as rl
from . import rng as rngmod
from .sgd_engine import ProblemSpec, expected_iterate, power_law_problem, sgd_errors
from .spectral_core import Spectrum, gaussian_R0, gaussian_Ralpha, power_norms


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail} ({self.seconds:.1f}s)"


# small power-law problem shared by the SGD checks
SMALL = dict(dim=50, spectral_decay=1.4, delta=1.2)


def _small_problem(noise_std=0.0):
    return power_law_problem(SMALL["dim"], SMALL["spectral_decay"], SMALL["delta"], noise_std)


def _alpha_low():
    return rl.gaussian_predicted_exponent(SMALL["spectral_decay"], SMALL["delta"]) - 0.02


def _replicate_errors(problem, gamma, checkpoints, seed, replicates):
    out = np.empty((replicates, len(checkpoints), problem.dim))
    for r in range(replicates):
        for j, (_, err, _, _) in enumerate(sgd_errors(problem, gamma, checkpoints[-1], seed, checkpoints, r)):
            out[r, j] = err
    return out


def check_log_convexity(seed: int) -> CheckResult:
    """Hoelder: phi(mix of b1, b2) <= phi(b1)^(1-t) phi(b2)^t on the same replicates."""
    problem = _small_problem()
    gamma = 1.0 / gaussian_R0(problem.spectrum)
    cps = [1, 10, 100, 1000]
    errs = _replicate_errors(problem, gamma, cps, seed, 200)
    a = _alpha_low()
    worst = -np.inf
    gen = rngmod.stream(seed, 0, rngmod.TARGET)
    for j in range(len(cps)):
        e = errs[:, j]

        def phi(b):
            return float(np.mean(power_norms(problem.spectrum, e, b)))

        # the required triple plus random interpolations between the grid points
        trials = [(-1.0, a, 1.0 / (1.0 + a))]
        trials += [(-1.0, 0.0, t) for t in gen.uniform(0, 1, 5)] + [(0.0, a, t) for t in gen.uniform(0, 1, 5)]
        for b1, b2, t in trials:
            mid = (1 - t) * b1 + t * b2
            worst = max(worst, phi(mid) / (phi(b1) ** (1 - t) * phi(b2) ** t) - 1.0)
    ok = worst <= 1e-12
    return CheckResult("log_convexity", ok, f"max relative excess {worst:.3e} (allowed 1e-12)")


def check_recurrence(seed: int) -> CheckResult:
    """Expected one-step inequality on phi and monotone reconstruction error."""
    problem = _small_problem()
    spec = problem.spectrum
    r0 = gaussian_R0(spec)
    gamma = 1.0 / r0
    a = _alpha_low()
    ra = gaussian_Ralpha(spec, a)
    cps = [0, 1, 2, 3, 4, 5, 9, 10, 49, 50, 199, 200]
    m = 1000
    errs = _replicate_errors(problem, gamma, cps, seed, m)
    worst = -np.inf
    for beta in (0.0, a / 2, a):
        k = r0 ** (1 - beta / a) * ra ** (beta / a)
        for j in range(1, len(cps)):
            if cps[j] != cps[j - 1] + 1:
                continue
            prev, cur = errs[:, j - 1], errs[:, j]
            rhs = (
                power_norms(spec, prev, beta)
                - 2 * gamma * power_norms(spec, prev, beta - 1)
                + gamma**2 * k * power_norms(spec, prev, -1.0)
            )
            diff = power_norms(spec, cur, beta) - rhs
            # paired per-replicate difference: its stderr is the pooled slack
            se = diff.std(ddof=1) / math.sqrt(m)
            worst = max(worst, (diff.mean() - 3 * se) / max(abs(rhs.mean()), 1e-300))
    recon = np.array([power_norms(spec, errs[:, j], 0.0) for j in range(len(cps))])
    mean, se = recon.mean(axis=1), recon.std(axis=1, ddof=1) / math.sqrt(m)
    rises = [mean[j] - mean[j - 1] - 3 * math.hypot(se[j], se[j - 1]) for j in range(1, len(cps))]
    mono = max(rises) <= 0
    ok = worst <= 0 and mono
    return CheckResult(
        "recurrence",
        ok,
        f"max normalized violation beyond 3 stderr {worst:.3e}; recon non-increasing within 3 stderr: {mono}",
    )


def check_lemma1(seed: int, samples: int = 1_000_000) -> CheckResult:
    """E[<X, A X> X X^T] = 2 Sigma A Sigma + Tr(Sigma A) Sigma for symmetric A."""
    lam = np.array([1.0, 0.5, 0.25, 0.1])
    d = lam.size
    gen = rngmod.stream(seed, 0, rngmod.FEATURES)
    b = gen.standard_normal((d, d))
    a_mat = 0.5 * (b + b.T)
    sig = np.diag(lam)
    rhs = 2 * sig @ a_mat @ sig + np.trace(sig @ a_mat) * sig
    s1 = np.zeros((d, d))
    s2 = np.zeros((d, d))
    chunk = 100_000
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        x = np.sqrt(lam) * gen.standard_normal((n, d))
        q = np.einsum("ni,ij,nj->n", x, a_mat, x)
        v = q[:, None, None] * x[:, :, None] * x[:, None, :]
        s1 += v.sum(axis=0)
        s2 += (v * v).sum(axis=0)
        done += n
    mean = s1 / samples
    se = np.sqrt((s2 / samples - mean**2) / (samples - 1))
    z = np.abs(mean - rhs) / se
    iu = np.triu_indices(d, 1)
    ok = bool(np.all(z <= 4))
    return CheckResult(
        "lemma1",
        ok,
        f"max |z| diagonal {np.diag(z).max():.2f}, off-diagonal {z[iu].max():.2f} (allowed 4, {samples} samples)",
    )


def check_expected_iterate(seed: int, seeds: int = 10_000) -> CheckResult:
    """Sample mean of theta_n over independent runs against the closed form."""
    lam = np.array([1.0, 0.5, 0.2, 0.05, 0.01])
    worst = 0.0
    cps = [1, 5, 20, 60]
    for noise in (0.0, 0.3):
        problem = ProblemSpec(Spectrum(lam), np.array([1.0, -0.5, 0.7, 2.0, -1.0]), noise)
        gamma = 1.0 / gaussian_R0(problem.spectrum)
        errs = _replicate_errors(problem, gamma, cps, seed, seeds)
        theta = errs + problem.theta_star
        for j, n in enumerate(cps):
            mean = theta[:, j].mean(axis=0)
            se = theta[:, j].std(axis=0, ddof=1) / math.sqrt(seeds)
            z = np.abs(mean - expected_iterate(problem, gamma, n)) / se
            worst = max(worst, float(z.max()))
    return CheckResult("expected_iterate", worst <= 4, f"max |z| {worst:.2f} over {seeds} seeds (allowed 4)")


def check_gossip_identities(seed: int, steps: int = 20_000) -> CheckResult:
    """Mass conservation and the exact squared-norm drop of each averaging step."""
    graphs = [gsp.torus_graph(1, 30), gsp.torus_graph(2, 8)]
    gen = rngmod.stream(seed, 1, rngmod.EDGES)
    # a random connected graph: spanning path plus random chords
    n = 40
    perm = gen.permutation(n)
    pairs = {tuple(sorted((int(perm[i]), int(perm[i + 1])))) for i in range(n - 1)}
    while len(pairs) < 90:
        u, v = (int(x) for x in gen.integers(0, n, 2))
        if u != v:
            pairs.add((min(u, v), max(u, v)))
    graphs.append(gsp.Graph(n, np.array(sorted(pairs))))
    mass_err = 0.0
    drop_err = 0.0
    trace_err = 0.0
    for g in graphs:
        state = gsp.AveragingState.indicator(g.n_vertices, 0)
        picks = np.concatenate([c for c, _ in zip(gsp.sample_edges(g, seed), range(steps // gsp.EDGE_CHUNK + 1))])
        cps = [0, steps // 10, steps]
        recon_at = {}
        for k in range(steps + 1):
            if k in cps:
                recon_at[k] = float(np.sum((state.values - 1.0 / g.n_vertices) ** 2))
            if k == steps:
                break
            v, w = g.edges[picks[k]]
            before = float(np.dot(state.values, state.values))
            gap = state.values[v] - state.values[w]
            state = gsp.averaging_step(state, (v, w), g)
            after = float(np.dot(state.values, state.values))
            drop_err = max(drop_err, abs((before - after) - 0.5 * gap * gap))
            mass_err = max(mass_err, abs(math.fsum(state.values) - 1.0))
        tr = gsp.run_averaging(g, 0, steps, seed, cps)
        trace_err = max(trace_err, max(abs(r.recon_sq - recon_at[r.step]) for r in tr))
    ok = mass_err <= 1e-12 and drop_err <= 1e-12 and trace_err <= 1e-12
    return CheckResult(
        "gossip_identities",
        ok,
        f"mass error {mass_err:.1e}, drop error {drop_err:.1e}, replay vs engine {trace_err:.1e} (allowed 1e-12)",
    )


def check_torus_spectrum(seed: int) -> CheckResult:
    worst = 0.0
    for d, side in [(1, 30), (1, 64), (2, 10), (2, 32), (3, 6), (3, 10)]:
        closed = np.sort(gsp.torus_eigenvalues(d, side))
        prof = gsp.laplacian_profile(gsp.torus_graph(d, side), 0)
        worst = max(worst, float(np.abs(closed - np.sort(prof.eigenvalues)).max()))
    return CheckResult("torus_spectrum", worst <= 1e-9, f"max |closed form - dense| {worst:.2e} (allowed 1e-9)")


def check_parseval(seed: int, points: int = 20_000) -> CheckResult:
    """Fourier-side L2 error against Monte-Carlo quadrature over the torus."""
    worst = 0.0
    for d, K in [(1, 24), (2, 6)]:
        f = kt.make_target(kt.TargetSpec(1.0, 0.05, seed), d, K)
        g = kt.make_target(kt.TargetSpec(2.0, 0.05, seed + 1), d, K)
        exact = kt.l2_error(f, g)
        gen = rngmod.stream(seed, d, rngmod.POINTS)
        vals = np.array([(kt.evaluate(f, u) - kt.evaluate(g, u)) ** 2 for u in gen.random((points, d))])
        z = abs(vals.mean() - exact) / (vals.std(ddof=1) / math.sqrt(points))
        worst = max(worst, z)
    return CheckResult("parseval", worst <= 3, f"max |z| {worst:.2f} (allowed 3)")


def check_kernel_contraction(seed: int) -> CheckResult:
    """After a step at u the residual at u is multiplied by 1 - gamma t(0)."""
    worst = 0.0
    gen = rngmod.stream(seed, 0, rngmod.POINTS)
    for d, s, K in [(1, 2.0, 64), (2, 1.5, 8)]:
        kernel = kt.TorusKernel(d, s, K)
        target = kt.make_target(kt.TargetSpec(2.0, 0.05, seed), d, K)
        f = kt.FourierFunction.zero(d, K)
        t0 = kernel.value_at_zero()
        for gamma in (0.3 / t0, 1.0 / t0, 1.7 / t0):
            for _ in range(5):
                u = gen.random(d)
                before = kt.evaluate(f, u) - kt.evaluate(target, u)
                f = kt.kernel_sgd_step(f, target, kernel, u, gamma)
                after = kt.evaluate(f, u) - kt.evaluate(target, u)
                worst = max(worst, abs(after - (1 - gamma * t0) * before) / max(1.0, abs(before)))
    return CheckResult("kernel_contraction", worst <= 1e-10, f"max deviation {worst:.2e} (allowed 1e-10)")


def check_fit_exact(seed: int) -> CheckResult:
    worst = 0.0
    gen = rngmod.stream(seed, 0, rngmod.TARGET)
    n = np.array(list(rl.log_schedule(10**6, 10)), dtype=float)
    for p in [0.0, 0.2857142857142857, 0.5, 1.0, 1.6, 2.5, *gen.uniform(0, 3, 4)]:
        c = float(gen.uniform(0.1, 10))
        fit = rl.fit_exponent(list(zip(n, c * n ** (-p))))
        worst = max(worst, abs(fit.exponent - p), abs(1.0 - fit.r_squared))
    return CheckResult("fit_exact", worst <= 1e-10, f"max error {worst:.2e} (allowed 1e-10)")


CHECKS = {
    "log_convexity": check_log_convexity,
    "recurrence": check_recurrence,
    "lemma1": check_lemma1,
    "expected_iterate": check_expected_iterate,
    "gossip_identities": check_gossip_identities,
    "torus_spectrum": check_torus_spectrum,
    "parseval": check_parseval,
    "kernel_contraction": check_kernel_contraction,
    "fit_exact": check_fit_exact,
}


def run_checks(only=None, seed: int = 0, echo=None) -> list[CheckResult]:
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown check(s): {', '.join(unknown)}; choose from {', '.join(CHECKS)}")
    out = []
    for name in names:
        t = time.perf_counter()
        res = CHECKS[name](seed)
        res.seconds = time.perf_counter() - t
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out
