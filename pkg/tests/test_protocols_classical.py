import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqcomm.protocols_classical import (
    PrivateCoinProtocol,
    PublicCoinEqProtocol,
    audit_error,
    compose_eq,
    load_protocol,
    newman_convert,
    newman_tape_count,
    public_eq_protocol,
    run_private,
    run_public,
    save_protocol,
)
from eqcomm.util import CapExceeded


def test_public_protocol_hash_sizes():
    assert public_eq_protocol(8, Fraction(1, 2)).k == 1
    p = public_eq_protocol(8, Fraction(1, 8))
    assert p.k == 3 and p.error == Fraction(1, 8)
    q = public_eq_protocol(8, Fraction(1, 10))
    assert q.k == 4 and q.error == Fraction(1, 16) <= Fraction(1, 10)
    assert q.cost == 5
    with pytest.raises(ValueError):
        public_eq_protocol(8, Fraction(3, 2))


def test_public_error_is_exact_by_enumeration():
    # Oracle: enumerate every tuple of k shared strings for n = 3, k = 4.
    # For each z != 0 exactly 2**((n-1)k) of the 2**(nk) tuples collide.
    n, k = 3, 4
    total = 0
    for z in range(1, 2**n):
        colliding = 0
        for strings in itertools.product(range(2**n), repeat=k):
            if all((s & z).bit_count() % 2 == 0 for s in strings):
                colliding += 1
        assert colliding == 2 ** ((n - 1) * k)
        total += colliding
    assert total == (2**n - 1) * 2 ** ((n - 1) * k)


def test_run_public_never_errs_on_equal():
    p = public_eq_protocol(5, Fraction(1, 4))
    rng = np.random.default_rng(0)
    for x in range(8):
        out, bits = run_public(p, x, x, rng)
        assert out == 1 and bits == p.cost


def test_newman_tape_count_example():
    assert newman_tape_count(4, Fraction(1, 8), Fraction(1)) == 192


def test_newman_convert_verifies_and_audits_below_bound():
    base = public_eq_protocol(6, Fraction(1, 8))
    proto = newman_convert(base, Fraction(1), seed=3)
    assert proto.B == 6 * 6 * 8
    assert proto.verified
    audit = audit_error(proto)
    assert audit.max_error < Fraction(1, 4) == proto.error_bound
    assert audit.method == "xor"


def test_newman_convert_rejects_bad_delta():
    base = public_eq_protocol(4, Fraction(1, 8))
    with pytest.raises(ValueError):
        newman_convert(base, Fraction(0), seed=0)


def test_newman_exhaustive_cap():
    base = public_eq_protocol(11, Fraction(1, 8))
    with pytest.raises(CapExceeded):
        newman_convert(base, Fraction(1), seed=0)


def test_newman_sampled_mode_is_unverified():
    base = public_eq_protocol(12, Fraction(1, 8))
    proto = newman_convert(base, Fraction(1), seed=1, mode="sampled", samples=200)
    assert not proto.verified
    assert proto.check_mode == "sampled"


def test_audit_single_always_colliding_tape():
    # One tape of all-zero strings hashes everything to 0, so it collides
    # on every pair and the audited worst-case error is exactly 1.
    base = PublicCoinEqProtocol(n=3, k=2)
    proto = PrivateCoinProtocol(
        base=base,
        tapes=np.zeros((1, 2, 3), dtype=np.uint8),
        B=1,
        epsilon0=Fraction(1, 4),
        delta=Fraction(1),
        verified=False,
        seed=0,
    )
    audit = audit_error(proto)
    assert audit.max_error == 1


def test_histogram_mass_double_counts_tape_collisions():
    proto = newman_convert(public_eq_protocol(4, Fraction(1, 8)), Fraction(1), seed=5)
    audit = audit_error(proto)
    mass = sum(count * num_z for count, num_z in audit.histogram.items())
    # same quantity counted tape-by-tape
    per_tape = 0
    for strings in proto.tape_ints():
        for z in range(1, 2**proto.n):
            if all((s & z).bit_count() % 2 == 0 for s in strings):
                per_tape += 1
    assert mass == per_tape
    assert sum(audit.histogram.values()) == 2**proto.n - 1


def test_pair_audit_matches_xor_audit():
    proto = newman_convert(public_eq_protocol(4, Fraction(1, 8)), Fraction(1), seed=8)
    by_z = audit_error(proto, method="xor")
    by_pairs = audit_error(proto, method="pairs")
    assert by_pairs.max_error == by_z.max_error
    # per-pair error depends only on x XOR y
    x, y = by_pairs.argmax
    assert x ^ y == by_z.argmax[1]
    for count, num_z in by_z.histogram.items():
        assert by_pairs.histogram.get(count, 0) == num_z * 2**proto.n


def test_pair_audit_cap():
    proto = newman_convert(public_eq_protocol(7, Fraction(1, 8)), Fraction(1), seed=2)
    with pytest.raises(CapExceeded):
        audit_error(proto, method="pairs")


def test_run_private_equal_inputs_always_accept():
    proto = compose_eq(5, Fraction(1, 4), seed=11)
    rng = np.random.default_rng(0)
    for x in (0, 7, 19, 31):
        out, bits = run_private(proto, x, x, rng)
        assert out == 1
        assert bits == proto.cost


def test_run_private_empirical_error_matches_audit():
    proto = compose_eq(4, Fraction(1, 4), seed=11)
    audit = audit_error(proto)
    x, y = audit.argmax
    rng = np.random.default_rng(42)
    runs = 100_000
    wrong = sum(run_private(proto, x, y, rng)[0] for _ in range(runs))
    rate = wrong / runs
    p = float(audit.max_error)
    sigma = math.sqrt(p * (1 - p) / runs)
    assert abs(rate - p) <= 3 * sigma + 1e-9


def test_compose_eq_n8_quarter():
    proto = compose_eq(8, Fraction(1, 4), seed=1)
    assert proto.k == 5
    assert proto.epsilon0 == Fraction(1, 32)
    assert proto.delta == 7
    assert proto.B == newman_tape_count(8, Fraction(1, 32), Fraction(7)) == 32
    assert proto.verified
    assert proto.error_bound == Fraction(1, 4)
    assert audit_error(proto).max_error < Fraction(1, 4)


def test_compose_eq_degenerate_n1():
    proto = compose_eq(1, Fraction(1, 4), seed=4)
    assert proto.verified
    assert audit_error(proto).max_error < Fraction(1, 4)


def test_compose_eq_cost_example_n8_eps_tenth():
    proto = compose_eq(8, Fraction(1, 10), seed=9)
    _, bits = run_private(proto, 3, 200, np.random.default_rng(0))
    assert bits <= math.ceil(math.log2(8 / 0.1**2)) + 4 == 14


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6), st.sampled_from([Fraction(1, 4), Fraction(1, 8)]), st.integers(0, 50))
def test_compose_eq_cost_bounds(n, epsilon, seed):
    proto = compose_eq(n, epsilon, seed=seed)
    bound = math.log2(n / float(epsilon) ** 2)
    assert proto.cost <= bound + 5
    assert proto.pre_ceiling_cost <= bound + 4 + 1e-9


def test_protocol_roundtrip(tmp_path):
    proto = compose_eq(5, Fraction(1, 8), seed=17)
    path = tmp_path / "eq.proto"
    save_protocol(proto, path)
    back = load_protocol(path)
    assert back.n == proto.n and back.k == proto.k and back.B == proto.B
    assert back.epsilon0 == proto.epsilon0 and back.delta == proto.delta
    assert back.verified == proto.verified and back.seed == proto.seed
    assert np.array_equal(back.tapes, proto.tapes)
    save_protocol(back, tmp_path / "eq2.proto")
    assert path.read_bytes() == (tmp_path / "eq2.proto").read_bytes()


def test_compose_eq_deterministic():
    a = compose_eq(6, Fraction(1, 8), seed=23)
    b = compose_eq(6, Fraction(1, 8), seed=23)
    assert np.array_equal(a.tapes, b.tapes)
    assert a.attempts == b.attempts
