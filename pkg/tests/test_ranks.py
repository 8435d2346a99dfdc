from fractions import Fraction

import numpy as np
import pytest

from eqcomm.complexlin import numeric_rank
from eqcomm.protocols_classical import compose_eq
from eqcomm.protocols_quantum import mixed_protocol_params
from eqcomm.ranks import (
    NonnegFactorization,
    edge_list,
    identity_nonneg,
    identity_psd,
    identity_target,
    load_nonneg,
    load_psd,
    save_nonneg,
    save_psd,
    sink_eval,
    sink_pattern,
    sink_xor_matrix,
    sink_xor_nonneg,
    sink_xor_psd,
    verify_entrywise,
    vertex_edges,
)
from eqcomm.util import CapExceeded


def sink_oracle(m, orientation):
    # Independent implementation: build in-degree counts from the bits.
    indeg = [0] * m
    for i, (u, v) in enumerate(edge_list(m)):
        if (orientation >> i) & 1:
            indeg[u] += 1
        else:
            indeg[v] += 1
    return int(any(d == m - 1 for d in indeg))


def test_sink_eval_examples():
    # all edges into vertex 0 of K_3: edges (0,1) and (0,2) reversed
    assert sink_eval(3, 0b011) == 1
    # cyclic orientation 0->1->2->0 has no sink
    assert sink_eval(3, 0b010) == 0
    with pytest.raises(ValueError):
        sink_eval(3, 8)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_sink_eval_matches_indegree_oracle(m):
    n = m * (m - 1) // 2
    for z in range(1 << n):
        assert sink_eval(m, z) == sink_oracle(m, z)


def test_sink_counts():
    assert sum(sink_eval(3, z) for z in range(8)) == 6
    assert sum(sink_eval(4, z) for z in range(64)) == 32


def test_sink_pattern_all_zero_orientation_sinks_last_vertex():
    for m in (3, 4, 5):
        assert sink_pattern(m, m - 1) == 0
        assert sink_eval(m, 0) == 1
    assert vertex_edges(3, 1) == [0, 2]


def test_sink_xor_matrix_m3():
    target = sink_xor_matrix(3)
    assert target.entries.shape == (8, 8)
    assert np.all(np.diagonal(target.entries) == 1)
    assert np.all(target.entries.sum(axis=1) == 6)
    # XOR invariance: row x is row 0 permuted by XOR with x
    for x in range(8):
        for y in range(8):
            assert target.entries[x, y] == target.entries[0, x ^ y]


def test_sink_xor_matrix_cap():
    with pytest.raises(CapExceeded):
        sink_xor_matrix(6)


@pytest.fixture(scope="module")
def id_nonneg_n6():
    return identity_nonneg(6, Fraction(1, 4), seed=2)


def test_identity_nonneg_diagonal_exact_one(id_nonneg_n6):
    fact, report = id_nonneg_n6
    counts = fact.product_counts()
    assert np.all(np.diagonal(counts) * fact.scale.numerator == fact.scale.denominator)
    for x in (0, 17, 63):
        assert fact.entry(x, x) == 1


def test_identity_nonneg_offdiag_below_epsilon(id_nonneg_n6):
    fact, report = id_nonneg_n6
    assert report.passed and report.exact
    assert report.max_abs_error < Fraction(1, 4)
    assert fact.inner_dim <= 32 * 6 / (1 / 4) ** 2


def test_identity_nonneg_entries_are_probabilities(id_nonneg_n6):
    fact, _ = id_nonneg_n6
    product = fact.dense_product()
    assert product.min() >= 0.0 and product.max() <= 1.0 + 1e-12
    # left factor rows are probability distributions over columns
    assert np.all(fact.a_int.sum(axis=1) * fact.scale == 1)


def test_identity_nonneg_matches_tape_collision_oracle(id_nonneg_n6):
    fact, _ = id_nonneg_n6
    proto = compose_eq(6, Fraction(1, 4), seed=2)
    tape_ints = proto.tape_ints()
    rng = np.random.default_rng(0)
    for _ in range(25):
        x, y = (int(v) for v in rng.integers(0, 64, size=2))
        collide = sum(
            1
            for strings in tape_ints
            if all((s & (x ^ y)).bit_count() % 2 == 0 for s in strings)
        )
        assert fact.entry(x, y) == Fraction(collide, proto.B)


def test_identity_nonneg_reconstruction_rank(id_nonneg_n6):
    fact, _ = id_nonneg_n6
    assert numeric_rank(fact.dense_product()) <= fact.inner_dim


def test_identity_nonneg_cap():
    with pytest.raises(CapExceeded):
        identity_nonneg(11, Fraction(1, 4), seed=0)


def test_verify_entrywise_exact_identity_factors():
    eye = np.eye(8, dtype=np.uint8)
    fact = NonnegFactorization(inner_dim=8, a_int=eye, a_scale=Fraction(1),
                               b_int=eye, b_scale=Fraction(1))
    report = verify_entrywise(fact, identity_target(3), Fraction(1, 100))
    assert report.passed and report.max_abs_error == 0


def test_verify_entrywise_fails_below_achieved_error(id_nonneg_n6):
    fact, report = id_nonneg_n6
    tighter = report.max_abs_error / 2
    failing = verify_entrywise(fact, identity_target(6), tighter)
    assert not failing.passed
    x, y = failing.worst
    assert x != y
    assert fact.entry(x, y) == report.max_abs_error


def test_verify_entrywise_rejects_mismatched_shapes(id_nonneg_n6):
    fact, _ = id_nonneg_n6
    with pytest.raises(ValueError):
        verify_entrywise(fact, identity_target(5), Fraction(1, 4))
    with pytest.raises(TypeError):
        verify_entrywise(object(), identity_target(6), Fraction(1, 4))


def test_identity_psd_n4():
    fact, report = identity_psd(4, Fraction(1, 4), seed=0)
    assert report.passed and not report.exact
    assert fact.dim == 56 <= 8 * 2 / 0.25
    recon = fact.reconstruction()
    assert np.abs(np.diagonal(recon) - 1.0).max() <= 1e-9
    off = recon - np.eye(16)
    assert np.abs(off).max() < 0.25 + 1e-9


def test_sink_xor_nonneg_m3():
    fact, report = sink_xor_nonneg(3, seed=1)
    assert report.passed and report.exact
    assert report.max_abs_error <= Fraction(1, 3)
    assert fact.inner_dim == sum(fact.block_dims)
    assert len(fact.block_dims) == 3
    target = sink_xor_matrix(3).entries
    counts = fact.product_counts()
    scale = fact.scale
    for x in range(8):
        for y in range(8):
            value = counts[x, y] * scale
            if target[x, y]:
                assert 1 <= value <= 1 + Fraction(2, 9) < Fraction(4, 3)
            else:
                assert value <= Fraction(1, 3)


def test_sink_xor_nonneg_rounding_recovers_target():
    fact, _ = sink_xor_nonneg(3, seed=5)
    rounded = (fact.dense_product() >= 0.5).astype(np.uint8)
    assert np.array_equal(rounded, sink_xor_matrix(3).entries)


def test_sink_xor_nonneg_reconstruction_is_xor_invariant():
    fact, _ = sink_xor_nonneg(3, seed=7)
    counts = fact.product_counts()
    for x in range(8):
        for y in range(8):
            assert counts[x, y] == counts[0, x ^ y]


def test_sink_xor_psd_m3():
    fact, report = sink_xor_psd(3, seed=1)
    assert report.passed
    assert report.max_abs_error <= 1 / 3 + 1e-9
    r, d = mixed_protocol_params(2, Fraction(1, 9))
    assert fact.dim == 3 * d
    # diagonal: the sink vertex contributes exactly 1, the other two
    # vertices add nonnegative cross terms below 1/(3m) each
    recon = fact.reconstruction()
    diag = np.diagonal(recon)
    assert diag.min() >= 1.0 - 1e-9
    assert diag.max() <= 1.0 + 2 / 9 + 1e-9


def test_sink_psd_dimension_scaling_arithmetic():
    # dim(m) = m * d(m) with d from the per-vertex parameter arithmetic
    dims = {}
    for m in (3, 4):
        _, d = mixed_protocol_params(m - 1, Fraction(1, 3 * m))
        dims[m] = m * d
    assert dims[3] == 270 and dims[4] == 576
    ratio = dims[4] / dims[3]
    assert abs(ratio - (4 / 3) ** 2.5) <= 0.15


def test_sink_factor_caps():
    with pytest.raises(CapExceeded):
        sink_xor_nonneg(5, seed=0)
    with pytest.raises(CapExceeded):
        sink_xor_psd(5, seed=0)


def test_nonneg_roundtrip(tmp_path, id_nonneg_n6):
    fact, _ = id_nonneg_n6
    path = tmp_path / "id.nnf"
    save_nonneg(fact, path, meta={"n": 6, "epsilon": "1/4", "seed": 2})
    back, manifest = load_nonneg(path)
    assert manifest["n"] == 6
    assert back.inner_dim == fact.inner_dim
    assert back.scale == fact.scale
    assert np.array_equal(back.a_int, fact.a_int)
    assert np.array_equal(back.b_int, fact.b_int)
    save_nonneg(back, tmp_path / "id2.nnf", meta={"n": 6, "epsilon": "1/4", "seed": 2})
    assert path.read_bytes() == (tmp_path / "id2.nnf").read_bytes()


def test_psd_roundtrip(tmp_path):
    fact, _ = sink_xor_psd(3, seed=1)
    save_psd(fact, tmp_path / "sink", meta={"m": 3, "seed": 1})
    back, manifest = load_psd(tmp_path / "sink")
    assert manifest["m"] == 3
    assert back.dim == fact.dim
    assert np.abs(back.reconstruction() - fact.reconstruction()).max() <= 1e-12
