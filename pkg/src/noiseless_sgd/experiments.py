"""Experiment configurations and drivers shared by the CLI and the acceptance suite."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import partial

import numpy as np

from . import gossip as gsp
from . import kernel_torus as kt
from . import rate_lab as rl
from . import rng as rngmod
from .sgd_engine import (
    SgdConfig,
    gaussian_R0,
    power_law_problem,
    regularity_terms,
    run_sgd,
    theorem1_constants,
)


class ConfigError(ValueError):
    """Invalid experiment configuration; ``key`` names the offending field."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


def _require(cond, key, msg):
    if not cond:
        raise ConfigError(key, msg)


def _check_common(cfg):
    _require(isinstance(cfg.iters, int) and cfg.iters >= 10, "iters", "must be an integer >= 10")
    _require(isinstance(cfg.replicates, int) and cfg.replicates >= 1, "replicates", "must be a positive integer")
    _require(isinstance(cfg.seed, int) and 0 <= cfg.seed <= rngmod.MASK64, "seed", "must be a 64-bit unsigned integer")
    _require(cfg.per_decade >= 1, "per_decade", "must be >= 1")


@dataclass
class GaussianConfig:
    dim: int
    beta_spec: float
    delta: float
    iters: int
    noise_std: float = 0.0
    gamma: float | None = None
    replicates: int = 1
    seed: int = 0
    betas: tuple = ()
    per_decade: int = 20
    window: tuple = (0.5, 1.0)
    tol_recon: float = 0.10
    tol_risk: float = 0.15
    kind: str = field(default="gaussian", init=False)

    def validate(self):
        _check_common(self)
        _require(isinstance(self.dim, int) and self.dim >= 1, "dim", "must be a positive integer")
        _require(self.beta_spec > 1, "beta_spec", "must be > 1")
        _require(self.delta >= 0.5, "delta", "must be >= 1/2")
        _require(self.noise_std >= 0 and math.isfinite(self.noise_std), "noise_std", "must be finite and >= 0")
        _require(self.gamma is None or self.gamma > 0, "gamma", "must be > 0")
        return self


@dataclass
class SobolevConfig:
    d: int
    r: float
    s: float
    K: int
    iters: int
    eps: float = 0.05
    gamma: float | None = None
    replicates: int = 1
    seed: int = 0
    per_decade: int = 20
    window: tuple = (0.5, 1.0)
    tol: float = 0.15
    kind: str = field(default="sobolev", init=False)

    def validate(self):
        _check_common(self)
        _require(isinstance(self.d, int) and self.d >= 1, "d", "must be a positive integer")
        _require(self.r > 0, "r", "must be > 0")
        _require(isinstance(self.K, int) and self.K >= 1, "K", "must be a positive integer")
        _require(self.eps > 0, "eps", "must be > 0")
        _require(
            self.d / 2 < self.s <= 2 * self.r - self.d / 2,
            "s",
            f"must satisfy d/2 < s <= 2r - d/2, i.e. ({self.d / 2:g}, {2 * self.r - self.d / 2:g}]",
        )
        _require(self.gamma is None or self.gamma > 0, "gamma", "must be > 0")
        return self


@dataclass
class GossipConfig:
    iters: int
    torus: tuple | None = None  # (d, side)
    edges: str | None = None
    spectral_dim: float | None = None  # needed for envelopes on edge-list graphs
    v_star: int = 0
    replicates: int = 1
    seed: int = 0
    per_decade: int = 20
    tol_recon: float = 0.15
    tol_energy: float = 0.2
    kind: str = field(default="gossip", init=False)

    def validate(self):
        _check_common(self)
        _require((self.torus is None) != (self.edges is None), "graph", "give exactly one of torus or edges")
        if self.torus is not None:
            _require(len(self.torus) == 2, "torus", "expects (d, side)")
            d, side = self.torus
            _require(int(d) >= 1, "torus", "d must be >= 1")
            _require(int(side) >= 3, "torus", "side must be >= 3")
            self.torus = (int(d), int(side))
        _require(self.v_star >= 0, "v_star", "must be >= 0")
        _require(self.spectral_dim is None or self.spectral_dim > 0, "spectral_dim", "must be > 0")
        return self

    def graph(self) -> gsp.Graph:
        if self.torus is not None:
            return gsp.torus_graph(*self.torus)
        return gsp.read_edge_list(self.edges)


CONFIGS = {"gaussian": GaussianConfig, "sobolev": SobolevConfig, "gossip": GossipConfig}


def config_to_dict(cfg) -> dict:
    out = asdict(cfg)
    for k, v in out.items():
        if isinstance(v, tuple):
            out[k] = list(v)
    return out


def config_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind")
    cls = CONFIGS[kind]
    names = {f.name for f in fields(cls) if f.init}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown configuration key")
    for k, v in d.items():
        if isinstance(v, list):
            d[k] = tuple(v)
    return cls(**d).validate()


@dataclass
class ExperimentResult:
    config: object
    mean: rl.MeanTrace
    reports: list
    extras: dict
    extra_columns: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)


def _map_replicates(fn, replicates: int, jobs: int):
    # results come back in replicate order whatever the completion order
    if jobs <= 1 or replicates == 1:
        return [fn(r) for r in range(replicates)]
    with ProcessPoolExecutor(max_workers=min(jobs, replicates)) as ex:
        return list(ex.map(fn, range(replicates)))


def _checkpoints(iters, per_decade):
    return list(rl.log_schedule(iters, per_decade).with_zero())


# gaussian features -------------------------------------------------------------


def _gaussian_replicate(cfg: GaussianConfig, replicate: int):
    problem = power_law_problem(cfg.dim, cfg.beta_spec, cfg.delta, cfg.noise_std)
    sgd = SgdConfig(cfg.iters, cfg.seed, _checkpoints(cfg.iters, cfg.per_decade), cfg.betas, cfg.gamma)
    return run_sgd(problem, sgd, replicate)


def theorem1_envelope(cfg: GaussianConfig, steps, margin: float = 0.02):
    """``C/n^a`` and ``C'/n^(a+1)`` at ``a = predicted - margin``."""
    problem = power_law_problem(cfg.dim, cfg.beta_spec, cfg.delta)
    a = rl.gaussian_predicted_exponent(cfg.beta_spec, cfg.delta) - margin
    terms = regularity_terms(problem, a)
    gamma = cfg.gamma if cfg.gamma is not None else 1.0 / terms["r0"]
    c, cp = theorem1_constants(a, gamma, terms["norm_alpha_sq"], terms["norm_sq"], terms["r0"], terms["ralpha"])
    n = np.asarray(steps, dtype=float)
    with np.errstate(divide="ignore"):
        return a, c, cp, c / n**a, cp / n ** (a + 1)


def run_gaussian(cfg: GaussianConfig, jobs: int = 1) -> ExperimentResult:
    cfg.validate()
    traces = _map_replicates(partial(_gaussian_replicate, cfg), cfg.replicates, jobs)
    mean = rl.mc_average(traces)
    pred = rl.gaussian_predicted_exponent(cfg.beta_spec, cfg.delta)
    problem = power_law_problem(cfg.dim, cfg.beta_spec, cfg.delta, cfg.noise_std)
    r0 = gaussian_R0(problem.spectrum)
    gamma = cfg.gamma if cfg.gamma is not None else 1.0 / r0
    extras = {"predicted_alpha": pred, "R0": r0, "gamma": gamma}
    reports = []
    if cfg.noise_std == 0:
        reports.append(rl.compare(rl.fit_exponent(mean.pairs("recon_sq"), cfg.window), pred, cfg.tol_recon, "recon_sq"))
        reports.append(
            rl.compare(rl.fit_exponent(mean.pairs("min_risk"), cfg.window), pred + 1, cfg.tol_risk, "min_risk")
        )
        a, c, cp, env_r, env_m = theorem1_envelope(cfg, mean.steps)
        late = mean.steps >= 10
        extras["envelope"] = {
            "alpha": a,
            "C": c,
            "C_prime": cp,
            "recon_dominated": bool(np.all(mean.mean("recon_sq")[late] <= env_r[late])),
            "min_risk_dominated": bool(np.all(mean.mean("min_risk")[late] <= env_m[late])),
        }
    else:
        # the risk settles at the noise floor; exponents are meaningless there
        risk = mean.mean("risk")
        recon = mean.mean("recon_sq")
        extras["noise_floor"] = {
            "floor_term": 2 * r0 * gamma * problem.optimal_risk,
            "plateau_ratio": float(risk[-1] / risk.min()),
            "plateau_level": float(risk[-1]),
            "recon_last_over_min": float(recon[-1] / recon.min()),
        }
    return ExperimentResult(cfg, mean, reports, extras)


# kernel interpolation on the torus -------------------------------------------


def _sobolev_parts(cfg: SobolevConfig):
    kernel = kt.TorusKernel(cfg.d, cfg.s, cfg.K)
    target = kt.make_target(kt.TargetSpec(cfg.r, cfg.eps, cfg.seed), cfg.d, cfg.K)
    return kernel, target


def _sobolev_replicate(cfg: SobolevConfig, replicate: int):
    kernel, target = _sobolev_parts(cfg)
    return kt.run_kernel_sgd(kernel, target, cfg.gamma, cfg.iters, cfg.seed, _checkpoints(cfg.iters, cfg.per_decade), replicate)


def run_sobolev(cfg: SobolevConfig, jobs: int = 1) -> ExperimentResult:
    cfg.validate()
    traces = _map_replicates(partial(_sobolev_replicate, cfg), cfg.replicates, jobs)
    mean = rl.mc_average(traces)
    pred = kt.predicted_exponent(cfg.r, cfg.s, cfg.d)
    kernel, _ = _sobolev_parts(cfg)
    t0 = kernel.value_at_zero()
    extras = {
        "predicted_alpha": pred,
        "t0": t0,
        "gamma": cfg.gamma if cfg.gamma is not None else 1.0 / t0,
        "truncated_target_mass": kt.tail_mass(kt.TargetSpec(cfg.r, cfg.eps, cfg.seed), cfg.d, cfg.K),
    }
    fit = rl.fit_exponent(mean.pairs("min_risk"), cfg.window)
    reports = [rl.compare(fit, pred + 1, cfg.tol, "l2_min_risk")]
    return ExperimentResult(cfg, mean, reports, extras)


# averaging process -------------------------------------------------------------


def _gossip_replicate(cfg: GossipConfig, replicate: int):
    graph = cfg.graph()
    return gsp.run_averaging(graph, cfg.v_star, cfg.iters, cfg.seed, _checkpoints(cfg.iters, cfg.per_decade), replicate)


def gossip_spectrum(cfg: GossipConfig, graph: gsp.Graph):
    """``(eigenvalues, weights at v_star, d)`` or ``None`` when unavailable."""
    if cfg.torus is not None:
        d, side = cfg.torus
        return gsp.torus_eigenvalues(d, side), None, float(cfg.spectral_dim or d)
    if graph.n_vertices > gsp.DENSE_LIMIT:
        return None
    prof = gsp.laplacian_profile(graph, cfg.v_star)
    return prof.eigenvalues, prof.vertex_weights, cfg.spectral_dim


def run_gossip(cfg: GossipConfig, jobs: int = 1) -> ExperimentResult:
    cfg.validate()
    graph = cfg.graph()
    if cfg.v_star >= graph.n_vertices:
        raise ConfigError("v_star", f"must be < N = {graph.n_vertices}")
    traces = _map_replicates(partial(_gossip_replicate, cfg), cfg.replicates, jobs)
    mean = rl.mc_average(traces)
    t = mean.t_rescaled
    extras = {"N": graph.n_vertices, "M": graph.n_edges, "max_degree": graph.max_degree}
    extra_cols = {}
    spec = gossip_spectrum(cfg, graph)
    d = None
    t_hi = t[-1]
    if spec is not None:
        lam, w, d = spec
        positive = np.sort(lam[lam > 1e-8 * lam.max()])
        gap = float(positive[0])
        # beyond ~1/gap the decay turns exponential; fit only the polynomial phase
        t_hi = min(t_hi, 1.0 / gap)
        extras["spectral_gap"] = gap
        if d is not None:
            V = gsp.spectral_dimension_constant(lam, w, d)
            extras["V"] = V
            extras["spectral_dim"] = d
            bd = np.full(len(t), np.nan)
            be = np.full(len(t), np.nan)
            for i, ti in enumerate(t):
                if ti >= 2:
                    bd[i], be[i] = gsp.corollary2_bounds(d, V, graph.max_degree, ti)
            extra_cols = {"bound_dist": bd, "bound_energy": be}
            ok = (t >= 2) & (t <= 100)
            extras["envelope"] = {
                "recon_dominated": bool(np.all(mean.mean("recon_sq")[ok] <= bd[ok])),
                "min_energy_dominated": bool(np.all(mean.mean("min_risk")[ok] <= be[ok])),
            }
    extras["fit_window_t"] = [2.0, float(t_hi)]
    reports = []
    if d is not None and t_hi > 2:
        fr = rl.fit_exponent(mean.pairs("recon_sq", "t"), bounds=(2.0, t_hi))
        fe = rl.fit_exponent(mean.pairs("min_risk", "t"), bounds=(2.0, t_hi))
        reports.append(rl.compare(fr, d / 2, cfg.tol_recon, "recon_sq"))
        reports.append(rl.compare(fe, d / 2 + 1, cfg.tol_energy, "min_energy"))
    return ExperimentResult(cfg, mean, reports, extras, extra_cols)


RUNNERS = {"gaussian": run_gaussian, "sobolev": run_sobolev, "gossip": run_gossip}


def run(cfg, jobs: int = 1) -> ExperimentResult:
    return RUNNERS[cfg.kind](cfg, jobs)
