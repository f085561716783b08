from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import graphs, random_graph
from sketchlab._rng import derive_seed, gaussians, gaussians_reference, keyed_bits, uniforms
from sketchlab.errors import ContractViolation
from sketchlab.graph import Graph, laplacian, num_pairs, pair_index
from sketchlab.sketch import (
    GRID,
    GaussianStream,
    SamplingMatrix,
    SketchView,
    column_combine,
    empirical_covariance,
    empty_sketch,
    gaussian_block,
    gaussian_pairs,
    project,
    project_rows,
    sketch_graph,
    update,
)

SEED = 20240


def full(n: int) -> SamplingMatrix:
    return SamplingMatrix.for_graph(n)


# -- randomness ----------------------------------------------------------------


def test_keyed_bits_is_injective_on_a_range():
    bits = keyed_bits(123, np.arange(100_000, dtype=np.uint64))
    assert np.unique(bits).size == 100_000


def test_uniforms_open_interval_and_uniform():
    u = uniforms(derive_seed(1, "u"), np.arange(200_000))
    assert u.min() > 0 and u.max() < 1
    assert stats.kstest(u, "uniform").pvalue > 1e-3


def test_compiled_gaussians_match_reference():
    key = derive_seed(5, "g")
    idx = np.arange(5000, dtype=np.uint64) * np.uint64(7919)
    # sin versus shifted cos differ by an ulp or so
    assert np.allclose(gaussians(key, idx), gaussians_reference(key, idx), rtol=0, atol=1e-13)


def test_gaussians_are_standard_normal():
    z = gaussians(derive_seed(9, "z"), np.arange(200_000))
    assert stats.kstest(z, "norm").pvalue > 1e-3
    # even/odd halves of a Box-Muller pair must be uncorrelated
    assert abs(np.corrcoef(z[0::2], z[1::2])[0, 1]) < 0.01


def test_derive_seed_separates_labels():
    assert derive_seed(1, "a", 2) != derive_seed(1, "a", 3)
    assert derive_seed(1, "ab") != derive_seed(1, "a", "b")
    assert derive_seed(1, 0) != derive_seed(1, "0")


def test_gaussian_views_agree():
    labels = np.array([0, 3, 11])
    idx = np.array([0, 5, 6, 99, 100001])
    block = gaussian_block(SEED, labels, idx)
    for i, lab in enumerate(labels):
        assert np.array_equal(block[i], GaussianStream(SEED, int(lab)).values(idx))
    rr, cc = np.meshgrid(labels, idx, indexing="ij")
    assert np.array_equal(gaussian_pairs(SEED, rr.ravel(), cc.ravel()), block.ravel())
    assert np.all(np.round(block / GRID) * GRID == block)


# -- sampling matrices -----------------------------------------------------------


def test_explicit_sampling_validates_pairs():
    with pytest.raises(ContractViolation):
        SamplingMatrix(6, "explicit", pairs=(6,))
    s = SamplingMatrix.explicit_edges(4, [(3, 2), (0, 1)])
    assert s.sampled_pairs().tolist() == [0, 5]


def test_level_sampling_nests_and_has_right_rate():
    idx = np.arange(100_000)
    masks = [SamplingMatrix(100_000, "level", level=j, seed=3).mask(idx) for j in range(5)]
    for j in range(4):
        assert np.all(masks[j + 1] <= masks[j])
    for j, m in enumerate(masks):
        assert m.mean() == pytest.approx(2.0**-j, abs=0.01)


def test_bernoulli_deterministic_and_label_dependent():
    a = SamplingMatrix(10_000, "bernoulli", p=0.3, seed=4, label=0)
    b = SamplingMatrix(10_000, "bernoulli", p=0.3, seed=4, label=1)
    assert np.array_equal(a.sampled_pairs(), a.sampled_pairs())
    assert not np.array_equal(a.sampled_pairs(), b.sampled_pairs())
    assert a.sampled_pairs().size == pytest.approx(3000, abs=200)


def test_descriptor_round_trip():
    for s in [
        full(5),
        SamplingMatrix.explicit_edges(5, [(0, 1), (2, 4)]),
        SamplingMatrix.for_graph(5, kind="bernoulli", p=0.25, seed=7, label=2),
        SamplingMatrix.for_graph(5, kind="level", level=2, seed=1, bit=1, buckets=4, bucket=3),
    ]:
        back = SamplingMatrix.from_descriptor(json.loads(json.dumps(s.descriptor())))
        assert back == s


# -- projections -------------------------------------------------------------------


def test_project_examples():
    stream = GaussianStream(SEED, 0)
    assert not project(Graph.empty(5), full(5), stream).any()
    gamma = stream.values([0])[0]
    assert np.array_equal(project(Graph.from_edges(3, [(0, 1)]), full(3), stream), [gamma, -gamma, 0])
    tri = Graph.complete(3)
    no01 = SamplingMatrix.explicit_edges(3, [(0, 2), (1, 2)])
    assert np.array_equal(project(tri, no01, stream), project(Graph.from_edges(3, [(0, 2), (1, 2)]), full(3), stream))


def test_projection_matches_dense_incidence_product(rng):
    # independent route: g^T S B with explicit dense matrices
    for _ in range(10):
        n = int(rng.integers(2, 12))
        g = random_graph(n, 0.5, rng)
        s = SamplingMatrix.for_graph(n, kind="bernoulli", p=0.5, seed=int(rng.integers(1000)))
        stream = GaussianStream(SEED, 3)
        gvec = stream.values(np.arange(num_pairs(n)))
        b = np.zeros((num_pairs(n), n))
        for u, v in g.edges:
            k = pair_index(u, v, n)
            b[k, u], b[k, v] = 1.0, -1.0
        sel = np.diag(s.mask(np.arange(num_pairs(n))).astype(float))
        assert np.allclose(project(g, s, stream), gvec @ sel @ b, atol=1e-12)


@settings(max_examples=60)
@given(graphs(min_n=2, max_n=12), st.integers(0, 2**32))
def test_projection_sums_to_zero(g, label):
    p = project(g, full(g.n), GaussianStream(SEED, label))
    assert abs(p.sum()) <= 1e-9 * max(1.0, np.linalg.norm(p))


@settings(max_examples=60)
@given(graphs(min_n=2, max_n=12), st.data())
def test_projection_is_exactly_linear(g, data):
    edges = g.sorted_edges()
    split = data.draw(st.lists(st.booleans(), min_size=len(edges), max_size=len(edges)))
    g1 = Graph.from_edges(g.n, [e for e, k in zip(edges, split) if k])
    g2 = Graph.from_edges(g.n, [e for e, k in zip(edges, split) if not k])
    stream = GaussianStream(SEED, 1)
    s = full(g.n)
    assert np.array_equal(project(g1, s, stream) + project(g2, s, stream), project(g, s, stream))


# -- sketches ----------------------------------------------------------------------


def _matrices(n: int, s: int):
    return [SamplingMatrix.for_graph(n, kind="bernoulli", p=0.6, seed=2, label=i) for i in range(s)]


def test_sketch_examples(rng):
    g = random_graph(10, 0.4, rng)
    assert sketch_graph(g, [], SEED).s == 0
    a, b = sketch_graph(g, _matrices(10, 5), SEED), sketch_graph(g, _matrices(10, 5), SEED)
    assert np.array_equal(a.projections, b.projections)
    edges = g.sorted_edges()
    g1, g2 = Graph.from_edges(10, edges[::2]), Graph.from_edges(10, edges[1::2])
    s1, s2 = sketch_graph(g1, _matrices(10, 5), SEED), sketch_graph(g2, _matrices(10, 5), SEED)
    assert np.array_equal(s1.projections + s2.projections, a.projections)


def test_sketch_rows_use_independent_streams():
    g = Graph.complete(6)
    sk = sketch_graph(g, [full(6)] * 3, SEED)
    assert not np.array_equal(sk.projections[0], sk.projections[1])
    assert np.array_equal(sk.projections, project_rows(g, [full(6)] * 3, SEED))


def test_update_examples(rng):
    g = random_graph(8, 0.4, rng)
    mats = _matrices(8, 6)
    sk = sketch_graph(g, mats, SEED)
    e = next((u, v) for u in range(8) for v in range(u + 1, 8) if not g.has_edge(u, v))
    back = update(update(sk, e, +1), e, -1)
    assert np.array_equal(back.projections, sk.projections)
    built = empty_sketch(8, mats, SEED)
    for edge in rng.permutation(np.array(g.sorted_edges()).reshape(-1, 2)):
        built = update(built, tuple(int(x) for x in edge), +1)
    assert np.array_equal(built.projections, sk.projections)
    none = [SamplingMatrix.explicit_edges(8, [])] * 2
    empty = empty_sketch(8, none, SEED)
    assert np.array_equal(update(empty, (0, 1), +1).projections, empty.projections)


def test_update_contract():
    sk = empty_sketch(4, [full(4)], SEED)
    with pytest.raises(ContractViolation):
        update(sk, (0, 1), -1)
    with pytest.raises(ContractViolation):
        update(update(sk, (0, 1), 1), (0, 1), 1)
    with pytest.raises(ContractViolation):
        update(sk, (2, 2), 1)


def test_column_combine_examples():
    tri = Graph.complete(3)
    sk = sketch_graph(tri, [full(3)] * 4, SEED)
    assert np.allclose(column_combine(sk, range(3)), 0.0)
    one = sketch_graph(Graph.from_edges(2, [(0, 1)]), [full(2)] * 4, SEED)
    g01 = np.array([GaussianStream(SEED, i).values([0])[0] for i in range(4)])
    assert np.array_equal(column_combine(one, [0]), g01)
    # (0,1) cancels; (0,2) and (1,2) both have the set vertex as smaller endpoint
    expect = np.array([GaussianStream(SEED, i).values([1, 2]).sum() for i in range(4)])
    assert np.allclose(column_combine(sk, [0, 1]), expect)


def test_column_combine_equals_cut_contribution(rng):
    for _ in range(10):
        g = random_graph(9, 0.5, rng)
        verts = set(np.flatnonzero(rng.random(9) < 0.5).tolist())
        cut = Graph.from_edges(9, [(u, v) for u, v in g.edges if (u in verts) != (v in verts)])
        sk = sketch_graph(g, _matrices(9, 4), SEED)
        direct = project_rows(cut, _matrices(9, 4), SEED)
        signs = np.array([1.0 if v in verts else 0.0 for v in range(9)])
        assert np.allclose(column_combine(sk, verts), direct @ signs)


def test_decoder_view_carries_no_gaussian_secret():
    secret = 987654321123
    mats = [
        SamplingMatrix.for_graph(6, kind="bernoulli", p=0.5, seed=11, label=0),
        SamplingMatrix.for_graph(6, kind="level", level=1, seed=11, label=1),
    ]
    sk = sketch_graph(Graph.complete(6), mats, secret)
    text = sk.decoder_view().to_json()
    obj = json.loads(text)
    assert set(obj) == {"n", "s", "rows"}
    assert all(set(r) == {"sampling", "projection"} for r in obj["rows"])
    assert str(secret) not in text
    view = SketchView.from_json(text)
    assert np.array_equal(view.projections, sk.projections)
    assert view.matrices == sk.matrices


def test_covariance_examples():
    one = Graph.from_edges(2, [(0, 1)])
    cov = empirical_covariance(one, full(2), 100_000, 1)
    assert np.linalg.norm(cov - laplacian(one)) / np.linalg.norm(laplacian(one)) <= 0.05
    assert not empirical_covariance(one, SamplingMatrix.explicit_edges(2, []), 10, 1).any()
    tri = Graph.complete(3)
    cov = empirical_covariance(tri, full(3), 100_000, 2)
    assert np.linalg.norm(cov - laplacian(tri)) / np.linalg.norm(laplacian(tri)) <= 0.05


def test_covariance_identity_random_samplers(rng):
    for k in range(20):
        n = int(rng.integers(2, 17))
        g = random_graph(n, 0.5, rng)
        s = SamplingMatrix.for_graph(n, kind="bernoulli", p=0.5, seed=k)
        target = laplacian(s.restrict(g))
        cov = empirical_covariance(g, s, 100_000, 100 + k)
        assert np.linalg.norm(cov - target) / max(1.0, np.linalg.norm(target)) <= 0.05
