"""Hash-based Equality protocols and the public-to-private coin conversion.

The public-coin protocol hashes an n-bit input with k shared uniformly
random n-bit strings: the hash of x is the k parities <s_i, x> over GF(2),
and the players accept iff the hashes of x and y agree.  On equal inputs it
never errs; on unequal inputs the hashes collide with probability exactly
2**-k over the shared strings.

The private-coin conversion hardwires B independently sampled tapes (each
tape is one draw of the k shared strings).  Alice privately picks a tape
index, announces it, and the players run the hash protocol on that tape.
The construction is Las Vegas: after sampling, the tape list is verified
exhaustively, and resampled wholesale if any difference z = x XOR y has too
many colliding tapes.  Collision of a tape on (x, y) depends only on z, so
exhaustive verification enumerates the 2**n - 1 nonzero z instead of all
4**n ordered pairs; a generic pair-by-pair path is kept alongside (with a
smaller cap) to cross-check that shortcut.

All error accounting is in exact rationals.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .gf2codes import all_messages_bits
from .util import CapExceeded, RetryBudgetExceeded, ceil_log2, ceil_log2_fraction

XOR_AUDIT_CAP = 10
PAIR_AUDIT_CAP = 6
DEFAULT_RETRIES = 16

_PROTO_MAGIC = "EQPT"


@dataclass(frozen=True)
class PublicCoinEqProtocol:
    """Shared-randomness Equality protocol with k parity hash bits."""

    n: int
    k: int

    @property
    def error(self) -> Fraction:
        """Worst-case error: exactly 2**-k, attained on every unequal pair."""
        return Fraction(1, 2**self.k)

    @property
    def cost(self) -> int:
        """k hash bits from Alice plus the 1-bit outcome."""
        return self.k + 1

    @property
    def description(self) -> str:
        return (
            f"hash x to ({self.k} parities <s_i, x>) under shared random "
            f"s_1..s_{self.k}; accept iff both hashes agree"
        )


def public_eq_protocol(n: int, epsilon_pub) -> PublicCoinEqProtocol:
    """Cheapest parity-hash protocol with error at most epsilon_pub."""
    epsilon_pub = Fraction(epsilon_pub)
    if not 0 < epsilon_pub < 1:
        raise ValueError(f"epsilon_pub must be in (0, 1), got {epsilon_pub}")
    k = max(1, ceil_log2_fraction(1 / epsilon_pub))
    return PublicCoinEqProtocol(n=n, k=k)


def _hash_int(strings, x: int) -> int:
    """Hash message x (as k parity bits packed into an int)."""
    h = 0
    for i, s in enumerate(strings):
        h |= ((s & x).bit_count() & 1) << i
    return h


def run_public(proto: PublicCoinEqProtocol, x: int, y: int, rng) -> tuple[int, int]:
    """One execution with fresh shared randomness: (output bit, bits sent)."""
    rng = np.random.default_rng(rng)
    strings = [int(v) for v in rng.integers(0, 1 << proto.n, size=proto.k, dtype=np.int64)]
    out = int(_hash_int(strings, x) == _hash_int(strings, y))
    return out, proto.cost


@dataclass(frozen=True)
class PrivateCoinProtocol:
    """A hash protocol plus B hardwired tapes of shared randomness.

    tapes has shape (B, k, n): tape j is k strings of n bits each.
    `verified` is only set by an exhaustive check that every nonzero
    difference z has fewer than B * epsilon0 * (1 + delta) colliding tapes.
    """

    base: PublicCoinEqProtocol
    tapes: np.ndarray
    B: int
    epsilon0: Fraction
    delta: Fraction
    verified: bool
    seed: int
    attempts: int = 1
    check_mode: str = "exhaustive"

    def __post_init__(self):
        t = np.ascontiguousarray(self.tapes, dtype=np.uint8)
        if t.shape != (self.B, self.base.k, self.base.n):
            raise ValueError(f"tape shape {t.shape} != ({self.B}, {self.base.k}, {self.base.n})")
        if self.epsilon0 != Fraction(1, 2**self.base.k):
            raise ValueError("epsilon0 must equal the base protocol's exact error 2**-k")
        t.setflags(write=False)
        object.__setattr__(self, "tapes", t)

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def k(self) -> int:
        return self.base.k

    @property
    def error_bound(self) -> Fraction:
        """Strict bound on the worst-case error when verified."""
        return self.epsilon0 * (1 + self.delta)

    @property
    def cost(self) -> int:
        """ceil(log2 B) bits for the tape index, k hash bits, 1 output bit."""
        return ceil_log2(self.B) + self.base.k + 1

    @property
    def pre_ceiling_cost(self) -> float:
        """log2 of the unrounded tape count, plus k + 1."""
        b_real = newman_tape_bound(self.n, self.epsilon0, self.delta)
        return math.log2(b_real.numerator) - math.log2(b_real.denominator) + self.base.k + 1

    def tape_ints(self) -> tuple[tuple[int, ...], ...]:
        """Tapes with each n-bit string packed into an int (LSB-first)."""
        cached = getattr(self, "_tape_ints", None)
        if cached is None:
            weights = 1 << np.arange(self.n, dtype=np.int64)
            packed = (self.tapes.astype(np.int64) * weights).sum(axis=2)
            cached = tuple(tuple(int(v) for v in row) for row in packed)
            object.__setattr__(self, "_tape_ints", cached)
        return cached


def newman_tape_bound(n: int, epsilon0: Fraction, delta: Fraction) -> Fraction:
    """Unrounded tape count 6n / (delta**2 * epsilon0)."""
    return Fraction(6 * n) / (Fraction(delta) ** 2 * Fraction(epsilon0))


def newman_tape_count(n: int, epsilon0: Fraction, delta: Fraction) -> int:
    """Tape count B = ceil(6n / (delta**2 * epsilon0))."""
    return math.ceil(newman_tape_bound(n, epsilon0, delta))


def _counts_for_differences(tapes: np.ndarray, z_bits: np.ndarray) -> np.ndarray:
    """Colliding-tape count for each difference given as a row of bits."""
    B, k, n = tapes.shape
    flat = tapes.reshape(B * k, n).astype(np.int64)
    parities = (z_bits.astype(np.int64) @ flat.T) % 2
    collide = ~parities.reshape(-1, B, k).any(axis=2)
    return collide.sum(axis=1)


def _collision_counts_xor(tapes: np.ndarray, n: int) -> np.ndarray:
    """For each nonzero z (index z-1): number of tapes whose hash ignores z.

    Tape j collides on a pair (x, y) iff every string s in the tape has
    <s, x XOR y> = 0, so the count depends only on z = x XOR y.
    """
    return _counts_for_differences(tapes, all_messages_bits(n, include_zero=False))


def _hash_table(tapes: np.ndarray, n: int) -> np.ndarray:
    """(2**n, B) table of hash values for every input under every tape."""
    B, k, _ = tapes.shape
    x_bits = all_messages_bits(n).astype(np.int64)
    flat = tapes.reshape(B * k, n).astype(np.int64)
    parities = ((x_bits @ flat.T) % 2).reshape(-1, B, k)
    return (parities << np.arange(k, dtype=np.int64)).sum(axis=2)


def hash_table(proto: PrivateCoinProtocol) -> np.ndarray:
    """(2**n, B) table: the k-bit hash of every input under every tape."""
    return _hash_table(proto.tapes, proto.n)


def _violates(count: int, threshold: Fraction) -> bool:
    return count * threshold.denominator >= threshold.numerator


def newman_convert(
    base: PublicCoinEqProtocol,
    delta,
    seed: int,
    *,
    mode: str = "exhaustive",
    max_retries: int = DEFAULT_RETRIES,
    cap: int = XOR_AUDIT_CAP,
    samples: int = 10_000,
) -> PrivateCoinProtocol:
    """Hardwire B = ceil(6n / (delta**2 epsilon0)) tapes and certify them.

    Samples tapes from the seeded stream, then checks every nonzero
    difference z: the number of colliding tapes must stay strictly below
    B * epsilon0 * (1 + delta).  On a violation the whole tape list is
    resampled.  A Chernoff bound makes a single attempt fail with
    probability well below one, so this terminates quickly in practice.

    delta may exceed 1 (verification is exhaustive, so correctness never
    rests on the tail bound; only the expected retry count does).
    mode='sampled' spot-checks random differences and leaves the protocol
    unverified, for n beyond the exhaustive cap.
    """
    delta = Fraction(delta)
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    n, k = base.n, base.k
    epsilon0 = base.error
    B = newman_tape_count(n, epsilon0, delta)
    threshold = B * epsilon0 * (1 + delta)
    rng = np.random.default_rng(seed)

    if mode == "exhaustive" and n > cap:
        raise CapExceeded(f"n={n} exceeds exhaustive cap {cap}; use mode='sampled'")
    if mode not in ("exhaustive", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")

    for attempt in range(1, max_retries + 1):
        tapes = rng.integers(0, 2, size=(B, k, n), dtype=np.uint8)
        if mode == "exhaustive":
            counts = _collision_counts_xor(tapes, n)
            worst = int(counts.max())
            if not _violates(worst, threshold):
                return PrivateCoinProtocol(
                    base=base, tapes=tapes, B=B, epsilon0=epsilon0, delta=delta,
                    verified=True, seed=int(seed), attempts=attempt,
                )
        else:
            space = (1 << n) - 1
            zs = np.unique(1 + rng.integers(0, space, size=samples))
            z_bits = ((zs[:, None] >> np.arange(n)[None, :]) & 1).astype(np.uint8)
            counts = _counts_for_differences(tapes, z_bits)
            if not _violates(int(counts.max()), threshold):
                return PrivateCoinProtocol(
                    base=base, tapes=tapes, B=B, epsilon0=epsilon0, delta=delta,
                    verified=False, seed=int(seed), attempts=attempt,
                    check_mode="sampled",
                )
    raise RetryBudgetExceeded(
        f"no certified tape list for n={n}, delta={delta} in {max_retries} attempts"
    )


@dataclass(frozen=True)
class ErrorAudit:
    """Exhaustive worst-case error of a private-coin protocol.

    max_error is the exact rational collision-count / B maximized over
    unequal inputs; argmax is one attaining ordered pair.  The histogram
    maps a collision count to how many differences z (xor method) or how
    many ordered pairs (pairs method) realize it.
    """

    max_error: Fraction
    argmax: tuple[int, int]
    histogram: dict[int, int] = field(repr=False)
    method: str = "xor"


def audit_error(proto: PrivateCoinProtocol, *, method: str = "xor",
                cap: int | None = None) -> ErrorAudit:
    """Exact per-pair error audit, over differences z or over all pairs."""
    n, B = proto.n, proto.B
    if method == "xor":
        cap = XOR_AUDIT_CAP if cap is None else cap
        if n > cap:
            raise CapExceeded(f"n={n} exceeds audit cap {cap}")
        counts = _collision_counts_xor(proto.tapes, n)
        z_star = int(counts.argmax()) + 1
        hist: dict[int, int] = {}
        for c in counts.tolist():
            hist[c] = hist.get(c, 0) + 1
        return ErrorAudit(
            max_error=Fraction(int(counts.max()), B),
            argmax=(0, z_star),
            histogram=hist,
            method="xor",
        )
    if method == "pairs":
        cap = PAIR_AUDIT_CAP if cap is None else cap
        if n > cap:
            raise CapExceeded(f"n={n} exceeds pair-audit cap {cap}")
        table = _hash_table(proto.tapes, n)
        eq = table[:, None, :] == table[None, :, :]
        counts = eq.sum(axis=2)
        np.fill_diagonal(counts, -1)
        flat_arg = int(counts.argmax())
        x_star, y_star = divmod(flat_arg, 1 << n)
        hist = {}
        off = counts[counts >= 0]
        for c in off.tolist():
            hist[c] = hist.get(c, 0) + 1
        return ErrorAudit(
            max_error=Fraction(int(counts.max()), B),
            argmax=(x_star, y_star),
            histogram=hist,
            method="pairs",
        )
    raise ValueError(f"unknown method {method!r}")


def run_private(proto: PrivateCoinProtocol, x: int, y: int, rng) -> tuple[int, int]:
    """One execution: Alice privately samples a tape index, both hash.

    Returns (output bit, bits communicated); the cost is the same on every
    run: ceil(log2 B) + k + 1.
    """
    if x >> proto.n or y >> proto.n or x < 0 or y < 0:
        raise ValueError("inputs must be n-bit")
    rng = np.random.default_rng(rng)
    j = int(rng.integers(0, proto.B))
    strings = proto.tape_ints()[j]
    out = int(_hash_int(strings, x) == _hash_int(strings, y))
    return out, proto.cost


def compose_eq(n: int, epsilon, seed: int, *, mode: str = "exhaustive",
               max_retries: int = DEFAULT_RETRIES, cap: int = XOR_AUDIT_CAP) -> PrivateCoinProtocol:
    """Verified private-coin Equality protocol with error below epsilon.

    Builds the parity-hash protocol at epsilon/8 (so the realized base
    error is epsilon0 = 2**-k <= epsilon/8) and converts with
    delta = epsilon/epsilon0 - 1, which keeps the verified error strictly
    below epsilon0 * (1 + delta) = epsilon.  Splitting at epsilon/8 rather
    than epsilon/2 trades more hash bits for a quadratically smaller tape
    list; the total cost lands below log2(n/eps^2) + 4 before rounding and
    below log2(n/eps^2) + 5 after, output bit included.
    """
    epsilon = Fraction(epsilon)
    if not 0 < epsilon < Fraction(1, 2):
        raise ValueError(f"epsilon must be in (0, 1/2), got {epsilon}")
    base = public_eq_protocol(n, epsilon / 8)
    delta = epsilon / base.error - 1
    return newman_convert(base, delta, seed, mode=mode, max_retries=max_retries, cap=cap)


def save_protocol(proto: PrivateCoinProtocol, path) -> None:
    """One JSON header line, then the tape bits packed row-per-string
    (rows padded to byte boundaries, LSB-first, same packing as GF2C)."""
    header = {
        "magic": _PROTO_MAGIC,
        "n": proto.n,
        "k": proto.k,
        "B": proto.B,
        "epsilon0": str(proto.epsilon0),
        "delta": str(proto.delta),
        "seed": proto.seed,
        "verified": proto.verified,
        "attempts": proto.attempts,
    }
    rows = np.packbits(proto.tapes.reshape(proto.B * proto.k, proto.n),
                       axis=1, bitorder="little")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode())
        fh.write(b"\n")
        fh.write(rows.tobytes())


def load_protocol(path) -> PrivateCoinProtocol:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    header = json.loads(header_line)
    if header.get("magic") != _PROTO_MAGIC:
        raise ValueError("not a protocol file")
    n, k, B = header["n"], header["k"], header["B"]
    row_bytes = (n + 7) // 8
    packed = np.frombuffer(payload[: B * k * row_bytes], dtype=np.uint8).reshape(B * k, row_bytes)
    tapes = np.unpackbits(packed, axis=1, count=n, bitorder="little").reshape(B, k, n)
    return PrivateCoinProtocol(
        base=PublicCoinEqProtocol(n=n, k=k),
        tapes=tapes,
        B=B,
        epsilon0=Fraction(header["epsilon0"]),
        delta=Fraction(header["delta"]),
        verified=bool(header["verified"]),
        seed=int(header["seed"]),
        attempts=int(header.get("attempts", 1)),
    )
