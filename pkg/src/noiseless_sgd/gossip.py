"""The averaging (gossip) process on finite graphs and graph spectra.

The Laplacian is ``L = sum_{vw in E} (e_v - e_w)(e_v - e_w)^T`` throughout.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import rng as rngmod
from .sgd_engine import TraceRecord

DENSE_LIMIT = 4096
# edges are drawn from the stream in chunks of this size; part of the stream
# definition like sgd_engine.BLOCK
EDGE_CHUNK = 1 << 16


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    n_vertices: int
    edges: np.ndarray
    _adj: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.n_vertices)
        if n < 1:
            raise GraphError("graph needs at least one vertex")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise GraphError("vertex id out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise GraphError("self-loops are not allowed")
        key = np.sort(e, axis=1)
        if len(np.unique(key, axis=0)) != len(key):
            raise GraphError("duplicate edges")
        if n > 1:
            a = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
            ncomp, _ = connected_components(a, directed=False)
            if ncomp != 1:
                raise GraphError(f"graph is disconnected ({ncomp} components)")
        e.setflags(write=False)
        object.__setattr__(self, "n_vertices", n)
        object.__setattr__(self, "edges", e)
        # CSR adjacency
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        order = np.argsort(src, kind="stable")
        ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(ptr, src + 1, 1)
        object.__setattr__(self, "_adj", (np.cumsum(ptr), dst[order].astype(np.int64)))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self._adj[0])

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n_edges else 0

    def has_edge(self, v: int, w: int) -> bool:
        ptr, nbr = self._adj
        return bool(np.any(nbr[ptr[v] : ptr[v + 1]] == w))

    def laplacian(self) -> np.ndarray:
        n = self.n_vertices
        lap = np.zeros((n, n))
        v, w = self.edges[:, 0], self.edges[:, 1]
        np.add.at(lap, (v, v), 1.0)
        np.add.at(lap, (w, w), 1.0)
        np.add.at(lap, (v, w), -1.0)
        np.add.at(lap, (w, v), -1.0)
        return lap


def read_edge_list(path) -> Graph:
    """Read ``# vertices N`` followed by one ``u v`` pair per line (0-indexed)."""
    n = None
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "vertices":
                    n = int(parts[1])
                continue
            try:
                u, v = (int(p) for p in line.split())
            except ValueError:
                raise GraphError(f"{path}:{lineno}: expected 'u v', got {line!r}") from None
            pairs.append((u, v))
    if n is None:
        raise GraphError(f"{path}: missing '# vertices N' header")
    return Graph(n, np.array(pairs, dtype=np.int64).reshape(-1, 2))


def write_edge_list(graph: Graph, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# vertices {graph.n_vertices}\n")
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")


def torus_graph(d: int, side: int) -> Graph:
    """Torus ``(Z/side)^d`` with nearest-neighbour edges.

    Vertices are numbered in row-major order; edges are listed vertex by
    vertex, one per axis, towards the ``+1`` neighbour.
    """
    if d < 1:
        raise GraphError("d must be >= 1")
    if side < 3:
        raise GraphError("side length must be >= 3 (smaller sides create duplicate edges)")
    idx = np.arange(side**d).reshape((side,) * d)
    nb = [np.roll(idx, -1, axis=ax).ravel() for ax in range(d)]
    v = np.repeat(idx.ravel(), d)
    w = np.stack(nb, axis=1).ravel()
    return Graph(side**d, np.stack([v, w], axis=1))


@dataclass(frozen=True)
class AveragingState:
    values: np.ndarray
    step: int = 0

    @classmethod
    def indicator(cls, n: int, vertex: int) -> "AveragingState":
        x = np.zeros(n)
        x[vertex] = 1.0
        return cls(x, 0)


def averaging_step(state: AveragingState, edge, graph: Graph) -> AveragingState:
    """Replace both endpoint values of ``edge`` by their mean."""
    v, w = int(edge[0]), int(edge[1])
    if not (0 <= v < graph.n_vertices and 0 <= w < graph.n_vertices) or not graph.has_edge(v, w):
        raise GraphError(f"edge {{{v}, {w}}} is not in the graph")
    x = np.array(state.values, dtype=float)
    m = 0.5 * (x[v] + x[w])
    x[v] = m
    x[w] = m
    return AveragingState(x, state.step + 1)


def edge_energy(graph: Graph, x) -> float:
    """``0.5 * sum_{vw in E} (x_v - x_w)^2``."""
    x = np.asarray(x, dtype=float)
    diff = x[graph.edges[:, 0]] - x[graph.edges[:, 1]]
    return 0.5 * float(np.dot(diff, diff))


def sample_edges(graph: Graph, seed: int, replicate: int = 0):
    """Yield chunks of uniformly sampled edge indices, as used by :func:`run_averaging`."""
    gen = rngmod.stream(seed, replicate, rngmod.EDGES)
    while True:
        yield gen.integers(0, graph.n_edges, size=EDGE_CHUNK)


@numba.njit(cache=True)
def _local_energy(x, v, w, ptr, nbr):
    # twice the energy on edges touching v or w (the edge vw counted once)
    s = 0.0
    for k in range(ptr[v], ptr[v + 1]):
        s += (x[v] - x[nbr[k]]) ** 2
    for k in range(ptr[w], ptr[w + 1]):
        u = nbr[k]
        if u != v:
            s += (x[w] - x[u]) ** 2
    return s


@numba.njit(cache=True)
def _averaging_block(x, eu, ev, ptr, nbr, picks, energy, min_energy):
    for k in range(picks.shape[0]):
        e = picks[k]
        v = eu[e]
        w = ev[e]
        if x[v] != x[w]:
            old = _local_energy(x, v, w, ptr, nbr)
            m = 0.5 * (x[v] + x[w])
            x[v] = m
            x[w] = m
            energy += 0.5 * (_local_energy(x, v, w, ptr, nbr) - old)
            if energy < min_energy:
                min_energy = energy
    return energy, min_energy


def run_averaging(
    graph: Graph,
    v_star: int,
    iters: int,
    seed: int,
    checkpoints: Sequence[int],
    replicate: int = 0,
) -> list[TraceRecord]:
    """One realization of the averaging process started from ``e_{v_star}``.

    ``recon_sq`` is ``sum_v (x_n(v) - 1/N)^2``, ``risk`` the edge energy and
    ``min_risk`` its running minimum over every step. ``t_rescaled = n / M``.
    """
    n, m = graph.n_vertices, graph.n_edges
    if not 0 <= v_star < n:
        raise GraphError(f"vertex {v_star} out of range")
    cps = [int(c) for c in checkpoints]
    if any(b <= a for a, b in zip(cps, cps[1:])) or (cps and (cps[0] < 0 or cps[-1] > iters)):
        raise ValueError("checkpoints must be strictly increasing within [0, iters]")
    ptr, nbr = graph._adj
    eu = np.ascontiguousarray(graph.edges[:, 0])
    ev = np.ascontiguousarray(graph.edges[:, 1])
    x = AveragingState.indicator(n, v_star).values
    energy = edge_energy(graph, x)
    min_energy = energy
    picks = sample_edges(graph, seed, replicate)
    chunk = np.empty(0, dtype=np.int64)
    pos = 0
    step = 0
    since_sync = 0
    out = []
    for cp in cps:
        while step < cp:
            if pos == len(chunk):
                chunk = next(picks)
                pos = 0
            take = min(cp - step, len(chunk) - pos, max(m, 1) - since_sync)
            energy, min_energy = _averaging_block(x, eu, ev, ptr, nbr, chunk[pos : pos + take], energy, min_energy)
            pos += take
            step += take
            since_sync += take
            if since_sync >= m:
                # incremental updates drift; resync once per rescaled time unit
                energy = edge_energy(graph, x)
                min_energy = min(min_energy, energy)
                since_sync = 0
        total = math.fsum(x)
        if abs(total - 1.0) > 1e-12:
            raise AssertionError(f"mass not conserved at step {step}: sum = {total!r}")
        energy = edge_energy(graph, x)
        min_energy = min(min_energy, energy)
        recon = float(np.sum((x - 1.0 / n) ** 2))
        out.append(TraceRecord(step, recon, energy, min_energy, t_rescaled=step / m if m else 0.0))
    return out


@dataclass(frozen=True)
class SpectralProfile:
    eigenvalues: np.ndarray
    vertex_weights: np.ndarray


def laplacian_profile(graph: Graph, v: int) -> SpectralProfile:
    """Full Laplacian spectrum and the spectral measure weights ``u_i(v)^2`` at ``v``."""
    if graph.n_vertices > DENSE_LIMIT:
        raise GraphError(
            f"N={graph.n_vertices} exceeds the dense eigensolver limit {DENSE_LIMIT}; "
            "use torus_eigenvalues for toruses"
        )
    lam, u = np.linalg.eigh(graph.laplacian())
    lam = np.clip(lam, 0.0, None)
    return SpectralProfile(lam, u[v, :] ** 2)


def torus_eigenvalues(d: int, side: int) -> np.ndarray:
    """Laplacian eigenvalues of the torus ``(Z/side)^d`` in closed form.

    ``sum_j 2 (1 - cos(2 pi i_j / side))`` over ``i in {0..side-1}^d``, in
    row-major lattice order. The spectral measure is uniform over them at every
    vertex by translation invariance.
    """
    if side**d > 10**7:
        raise ValueError("torus too large for a full eigenvalue listing")
    circle = 2.0 * (1.0 - np.cos(2.0 * np.pi * np.arange(side) / side))
    out = np.zeros((side,) * d)
    for j in range(d):
        shape = [1] * d
        shape[j] = -1
        out = out + circle.reshape(shape)
    return out.ravel()


def spectral_dimension_constant(eigenvalues, weights=None, d: float = 1.0) -> float:
    """Largest ``V`` with ``sigma((0, E]) <= E^(d/2) / V`` for all ``E > 0``.

    ``weights`` default to the uniform measure. Eigenvalues below ``1e-8``
    times the largest one count as the zero eigenvalue.
    """
    lam = np.asarray(eigenvalues, dtype=float).ravel()
    if lam.size == 0:
        raise ValueError("empty spectrum")
    if d < 0:
        raise ValueError("d must be >= 0")
    w = np.full(lam.size, 1.0 / lam.size) if weights is None else np.asarray(weights, dtype=float).ravel()
    if w.shape != lam.shape:
        raise ValueError("weights and eigenvalues differ in length")
    pos = lam > 1e-8 * lam.max()
    if not np.any(pos) or w[pos].sum() <= 0:
        raise ValueError("spectral measure has no mass on (0, inf)")
    order = np.argsort(lam[pos], kind="stable")
    e = lam[pos][order]
    cum = np.cumsum(w[pos][order])
    # evaluate the measure only at the last copy of each repeated eigenvalue
    last = np.append(e[1:] != e[:-1], True)
    ratio = cum[last] / e[last] ** (d / 2)
    return float(1.0 / ratio.max())


def corollary2_bounds(d: float, V: float, delta_max: int, t: float) -> tuple[float, float]:
    """Envelopes ``D log t / t^(d/2)`` (distance) and ``D' log t / t^(d/2+1)`` (min energy)."""
    if not d > 0:
        raise ValueError("d must be > 0 (the constant degenerates at d = 0)")
    if t < 2:
        raise ValueError("the envelopes are only valid for rescaled time t >= 2")
    base = d ** (d / 2 + 1) / V * delta_max / math.log(2)
    big_d = 2.0 * base
    big_dp = 2.0 ** (d / 2 + 2) * base
    lt = math.log(t)
    return big_d * lt / t ** (d / 2), big_dp * lt / t ** (d / 2 + 1)


def torus_lattice_indices(d: int, side: int):
    """Lattice index tuples in the order used by :func:`torus_eigenvalues`."""
    return itertools.product(range(side), repeat=d)
