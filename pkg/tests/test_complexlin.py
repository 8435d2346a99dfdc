import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqcomm.complexlin import (
    Projector,
    load_matrix,
    numeric_rank,
    projector_overlap,
    realify,
    sample_haar_projector,
    save_matrix,
)


def random_unit(rng, d):
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def test_full_rank_projector_is_identity():
    p = sample_haar_projector(3, 3, rng=0)
    assert np.abs(p.matrix - np.eye(3)).max() <= 1e-9


def test_projector_spectrum():
    p = sample_haar_projector(4, 2, rng=1)
    eigs = np.sort(np.linalg.eigvalsh(p.matrix))
    assert np.allclose(eigs, [0, 0, 1, 1], atol=1e-9)
    assert abs(p.matrix.trace().real - 2) <= 1e-6


def test_projector_invariants_over_seeds():
    for seed in range(20):
        sample_haar_projector(16, 5, rng=seed)  # construction validates


def test_projector_rejects_non_idempotent():
    with pytest.raises(ValueError):
        Projector(d=2, r=1, matrix=np.array([[0.5, 0.0], [0.0, 0.6]]))


def test_overlap_self_is_rank():
    p = sample_haar_projector(10, 3, rng=2)
    assert abs(projector_overlap(p, p) - 3) <= 1e-9


def test_overlap_with_complement_is_zero():
    p = sample_haar_projector(6, 2, rng=3)
    q = Projector(d=6, r=4, matrix=np.eye(6) - p.matrix)
    assert abs(projector_overlap(p, q)) <= 1e-9


def test_overlap_hand_example():
    # |0><0| against |+><+| in dimension 2
    p = Projector(d=2, r=1, matrix=np.array([[1.0, 0.0], [0.0, 0.0]]))
    q = Projector(d=2, r=1, matrix=np.full((2, 2), 0.5))
    assert abs(projector_overlap(p, q) - 0.5) <= 1e-12


def test_overlap_symmetry_and_range():
    rng = np.random.default_rng(4)
    for _ in range(5):
        p = sample_haar_projector(12, 4, rng=rng)
        q = sample_haar_projector(12, 4, rng=rng)
        a, b = projector_overlap(p, q), projector_overlap(q, p)
        assert abs(a - b) <= 1e-9
        assert -1e-9 <= a <= 4 + 1e-9


def test_overlap_dimension_mismatch():
    p = sample_haar_projector(4, 1, rng=0)
    q = sample_haar_projector(5, 1, rng=0)
    with pytest.raises(ValueError):
        projector_overlap(p, q)


def test_mean_overlap_matches_r2_over_d():
    # Monte-Carlo estimate of E[tr(PQ)] for Haar pairs: r^2/d = 64/64 = 1
    rng = np.random.default_rng(5)
    pairs = 1000
    samples = np.empty(pairs)
    for i in range(pairs):
        p = sample_haar_projector(64, 8, rng=rng)
        q = sample_haar_projector(64, 8, rng=rng)
        samples[i] = projector_overlap(p, q)
    stderr = samples.std(ddof=1) / np.sqrt(pairs)
    assert abs(samples.mean() - 1.0) <= 0.1
    assert abs(samples.mean() - 1.0) <= 3 * stderr


def test_numeric_rank_identity_and_ones():
    assert numeric_rank(np.eye(7)) == 7
    assert numeric_rank(np.ones((7, 7))) == 1
    assert numeric_rank(np.zeros((3, 3))) == 0


def test_numeric_rank_gram_of_k_random_vectors():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        k, d = 5, 9
        vecs = np.array([random_unit(rng, d) for _ in range(k)])
        gram = vecs.conj() @ vecs.T
        assert numeric_rank(gram) == k


def test_realify_examples():
    assert realify(np.array([1.0, 0.0])).tolist() == [1.0, 0.0, 0.0, 0.0]
    out = realify(np.array([1j]))
    assert out.tolist() == [0.0, 1.0]
    assert np.linalg.norm(out) == 1.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_realify_is_an_isometry(seed):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    v = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    d_complex = np.linalg.norm(u - v) ** 2
    d_real = np.linalg.norm(realify(u) - realify(v)) ** 2
    assert abs(d_complex - d_real) <= 1e-12 * max(1.0, d_complex)
    assert abs(np.vdot(u, v).real - realify(u) @ realify(v)) <= 1e-12


def test_cmpx_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    m = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    path = tmp_path / "m.cmpx"
    save_matrix(m, path)
    back = load_matrix(path)
    assert back.shape == (5, 3)
    assert np.array_equal(back, m)
    save_matrix(back, tmp_path / "m2.cmpx")
    assert (tmp_path / "m.cmpx").read_bytes() == (tmp_path / "m2.cmpx").read_bytes()
