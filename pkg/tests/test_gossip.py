import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noiseless_sgd import gossip as gsp
from noiseless_sgd import rate_lab as rl


def test_torus_graph_examples():
    c = gsp.torus_graph(1, 4)
    assert (c.n_vertices, c.n_edges) == (4, 4)
    t = gsp.torus_graph(2, 3)
    assert (t.n_vertices, t.n_edges) == (9, 18)
    assert np.all(t.degrees == 4)
    big = gsp.torus_graph(2, 40)
    assert (big.n_vertices, big.n_edges) == (1600, 3200)
    with pytest.raises(gsp.GraphError):
        gsp.torus_graph(1, 2)


def test_graph_validation():
    with pytest.raises(gsp.GraphError):
        gsp.Graph(4, [(0, 1), (2, 3)])
    with pytest.raises(gsp.GraphError):
        gsp.Graph(2, [(0, 1), (1, 0)])
    with pytest.raises(gsp.GraphError):
        gsp.Graph(2, [(0, 0), (0, 1)])
    with pytest.raises(gsp.GraphError):
        gsp.Graph(2, [(0, 2)])


def test_edge_list_round_trip(tmp_path):
    g = gsp.torus_graph(2, 4)
    path = tmp_path / "g.txt"
    gsp.write_edge_list(g, path)
    h = gsp.read_edge_list(path)
    assert h.n_vertices == g.n_vertices
    np.testing.assert_array_equal(h.edges, g.edges)
    bad = tmp_path / "bad.txt"
    bad.write_text("# vertices 4\n0 1\n2 3\n")
    with pytest.raises(gsp.GraphError, match="disconnected"):
        gsp.read_edge_list(bad)
    (tmp_path / "nohead.txt").write_text("0 1\n")
    with pytest.raises(gsp.GraphError):
        gsp.read_edge_list(tmp_path / "nohead.txt")


def test_averaging_step_examples():
    g = gsp.Graph(2, [(0, 1)])
    s = gsp.averaging_step(gsp.AveragingState(np.array([1.0, 0.0])), (0, 1), g)
    np.testing.assert_array_equal(s.values, [0.5, 0.5])
    assert s.step == 1
    same = gsp.averaging_step(s, (1, 0), g)
    np.testing.assert_array_equal(same.values, s.values)
    c = gsp.torus_graph(1, 4)
    with pytest.raises(gsp.GraphError):
        gsp.averaging_step(gsp.AveragingState.indicator(4, 0), (0, 2), c)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=5, max_size=5), st.integers(0, 4))
def test_averaging_step_norm_drop(values, e):
    g = gsp.torus_graph(1, 5)
    x = np.array(values)
    v, w = g.edges[e]
    y = gsp.averaging_step(gsp.AveragingState(x), (v, w), g).values
    mean = x.mean()
    before = np.sum((x - mean) ** 2)
    after = np.sum((y - mean) ** 2)
    assert before - after == pytest.approx(0.5 * (x[v] - x[w]) ** 2, abs=1e-12 * max(1.0, before))
    assert math.fsum(y) == pytest.approx(math.fsum(x), abs=1e-12 * max(1.0, np.abs(x).sum()))


def test_run_averaging_examples():
    g = gsp.torus_graph(1, 10)
    (r,) = gsp.run_averaging(g, 3, 0, 0, [0])
    assert r.recon_sq == pytest.approx(1 - 1 / 10)
    assert r.t_rescaled == 0.0
    pair = gsp.Graph(2, [(0, 1)])
    tr = gsp.run_averaging(pair, 0, 1, 5, [0, 1])
    assert tr[1].recon_sq == 0.0 and tr[1].risk == 0.0 and tr[1].t_rescaled == 1.0


def test_run_averaging_is_pathwise_monotone_and_deterministic():
    g = gsp.torus_graph(2, 6)
    cps = list(range(0, 2001, 25))
    a = gsp.run_averaging(g, 0, 2000, 3, cps)
    b = gsp.run_averaging(g, 0, 2000, 3, cps)
    assert [r.__dict__ for r in a] == [r.__dict__ for r in b]
    rec = [r.recon_sq for r in a]
    assert all(y <= x + 1e-15 for x, y in zip(rec, rec[1:]))
    assert all(r.min_risk <= r.risk for r in a)
    other = gsp.run_averaging(g, 0, 2000, 3, cps, replicate=1)
    assert other[-1].recon_sq != a[-1].recon_sq


def test_min_energy_tracks_every_step():
    g = gsp.torus_graph(1, 12)
    steps = 3000
    picks = next(gsp.sample_edges(g, 4))[:steps]
    x = np.zeros(12)
    x[0] = 1.0
    energies = [gsp.edge_energy(g, x)]
    for p in picks:
        v, w = g.edges[p]
        x[v] = x[w] = 0.5 * (x[v] + x[w])
        energies.append(gsp.edge_energy(g, x))
    tr = gsp.run_averaging(g, 0, steps, 4, [100, 1000, steps])
    for r in tr:
        assert r.risk == pytest.approx(energies[r.step], rel=1e-12, abs=1e-18)
        assert r.min_risk == pytest.approx(min(energies[: r.step + 1]), rel=1e-9, abs=1e-18)


def test_laplacian_profile_examples():
    p = gsp.laplacian_profile(gsp.Graph(2, [(0, 1)]), 0)
    np.testing.assert_allclose(p.eigenvalues, [0, 2], atol=1e-12)
    np.testing.assert_allclose(p.vertex_weights, [0.5, 0.5])
    c = gsp.laplacian_profile(gsp.torus_graph(1, 4), 0)
    np.testing.assert_allclose(c.eigenvalues, [0, 2, 2, 4], atol=1e-12)


def _random_connected(n, extra, seed):
    gen = np.random.default_rng(seed)
    perm = gen.permutation(n)
    pairs = {tuple(sorted((int(perm[i]), int(perm[i + 1])))) for i in range(n - 1)}
    while len(pairs) < n - 1 + extra:
        u, v = (int(t) for t in gen.integers(0, n, 2))
        if u != v:
            pairs.add((min(u, v), max(u, v)))
    return gsp.Graph(n, np.array(sorted(pairs)))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 20), st.integers(0, 10**6))
def test_profile_weights_sum_to_one(n, extra, seed):
    g = _random_connected(n, min(extra, n * (n - 1) // 2 - (n - 1)), seed)
    for v in (0, n - 1):
        p = gsp.laplacian_profile(g, v)
        assert p.vertex_weights.sum() == pytest.approx(1.0, abs=1e-8)
        assert abs(p.eigenvalues[0]) <= 1e-8 * p.eigenvalues[-1]


def test_torus_eigenvalue_examples():
    np.testing.assert_allclose(gsp.torus_eigenvalues(1, 4), [0, 2, 4, 2], atol=1e-12)
    expected = sorted(a + b for a in (0, 3, 3) for b in (0, 3, 3))
    np.testing.assert_allclose(np.sort(gsp.torus_eigenvalues(2, 3)), expected, atol=1e-12)
    for d, side in [(1, 16), (2, 12), (3, 5), (2, 32)]:
        dense = gsp.laplacian_profile(gsp.torus_graph(d, side), 0).eigenvalues
        np.testing.assert_allclose(np.sort(gsp.torus_eigenvalues(d, side)), dense, atol=1e-9)


def test_spectral_dimension_constant_examples():
    assert gsp.spectral_dimension_constant([0.0, 1.0], [0.3, 0.7], 0.0) == pytest.approx(1 / 0.7)
    # the halved cycle spectrum {0,1,1,2}: thresholds give 0.5 and 3/(4 sqrt 2)
    assert gsp.spectral_dimension_constant([0, 1, 1, 2], None, 1.0) == pytest.approx(4 * math.sqrt(2) / 3)
    # the combinatorial cycle spectrum {0,2,2,4}
    assert gsp.spectral_dimension_constant(gsp.torus_eigenvalues(1, 4), None, 1.0) == pytest.approx(8 / 3)
    with pytest.raises(ValueError):
        gsp.spectral_dimension_constant([0.0, 0.0], None, 1.0)


@pytest.mark.parametrize("d", [1, 2])
def test_spectral_dimension_constant_bound_and_size_stability(d):
    vs = []
    for side in (16, 64):
        lam = gsp.torus_eigenvalues(d, side)
        V = gsp.spectral_dimension_constant(lam, None, d)
        pos = np.sort(lam[lam > 1e-9])
        cum = np.arange(1, pos.size + 1) / lam.size
        assert np.all(cum <= pos ** (d / 2) / V * (1 + 1e-12))
        vs.append(V)
    V1 = [gsp.spectral_dimension_constant(gsp.torus_eigenvalues(1, s), None, 1) for s in (64, 128, 256)]
    assert max(V1) / min(V1) <= 2
    assert max(vs) / min(vs) <= 2


def test_corollary2_examples():
    dist, energy = gsp.corollary2_bounds(1.0, 1.0, 2, 2.0)
    assert dist == pytest.approx(2 / math.log(2) * 2 * math.log(2) / math.sqrt(2))
    assert dist == pytest.approx(2.8284271, rel=1e-7)
    for d, t in [(1.0, 5.0), (2.0, 3.0), (3.5, 50.0)]:
        a, b = gsp.corollary2_bounds(d, 1.3, 4, t)
        # D'/D = 2^(d/2+1), and the energy envelope carries one extra 1/t
        assert (b * t) / a == pytest.approx(2 ** (d / 2 + 1))
    with pytest.raises(ValueError):
        gsp.corollary2_bounds(1.0, 1.0, 2, 1.5)
    with pytest.raises(ValueError):
        gsp.corollary2_bounds(0.0, 1.0, 2, 3.0)


@pytest.mark.parametrize("d, side, reps", [(1, 64, 1000), (2, 16, 1000)])
def test_corollary2_envelopes_dominate(d, side, reps):
    g = gsp.torus_graph(d, side)
    m = g.n_edges
    V = gsp.spectral_dimension_constant(gsp.torus_eigenvalues(d, side), None, d)
    cps = [int(round(t * m)) for t in np.geomspace(2, 100, 12)]
    traces = [gsp.run_averaging(g, 0, cps[-1], 0, cps, r) for r in range(reps)]
    mean = rl.mc_average(traces)
    for i, t in enumerate(mean.t_rescaled):
        bd, be = gsp.corollary2_bounds(d, V, g.max_degree, t)
        assert mean.mean("recon_sq")[i] <= bd
        assert mean.mean("min_risk")[i] <= be
