"""Exact GF(2) linear algebra for random linear codes.

A linear code here is an N x n bit matrix G over GF(2): an n-bit message x
is mapped to the N-bit codeword G.x (matrix-vector product mod 2).  Because
the map is linear, the Hamming distance between two codewords equals the
Hamming weight of the codeword of the XOR of the messages, so exhaustive
pairwise-distance verification only needs the 2**n - 1 nonzero messages.

All correctness-critical arithmetic in this module is integer arithmetic:
band membership for a relative-distance band [1/2 - delta, 1/2 + delta] is
decided from the exact square delta**2 (a rational), via the equivalent
integer comparison  q * (2w - N)**2 <= 4 p N**2  for delta**2 = p/q.

Conventions: messages are either length-n 0/1 vectors or integers whose
bit j (LSB first) is coordinate j.  Codewords follow the same convention.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .util import CapExceeded, RetryBudgetExceeded

EXHAUSTIVE_CAP = 24  # 2**24 - 1 nonzero messages is the default enumeration limit
DEFAULT_RETRIES = 16

_GF2C_MAGIC = b"GF2C"
_GF2C_VERSION = 1


def int_to_bits(x: int, width: int) -> np.ndarray:
    """LSB-first bit vector of x as a length-`width` uint8 array."""
    if x < 0 or x >> width:
        raise ValueError(f"{x} does not fit in {width} bits")
    return ((x >> np.arange(width)) & 1).astype(np.uint8)


def bits_to_int(bits) -> int:
    """Inverse of int_to_bits (LSB-first)."""
    b = np.asarray(bits).astype(np.uint8) & 1
    return int(sum(int(v) << i for i, v in enumerate(b)))


def all_messages_bits(n: int, include_zero: bool = True) -> np.ndarray:
    """All n-bit messages as a (2**n or 2**n - 1, n) uint8 bit matrix."""
    start = 0 if include_zero else 1
    values = np.arange(start, 1 << n, dtype=np.int64)
    return ((values[:, None] >> np.arange(n)[None, :]) & 1).astype(np.uint8)


@dataclass(frozen=True)
class GeneratorMatrix:
    """An N x n generator matrix over GF(2) plus the seed that produced it.

    Invariants: N >= n >= 1 and every entry is 0 or 1.  Instances are
    immutable; the bit matrix is write-locked on construction.
    """

    n: int
    N: int
    bits: np.ndarray
    seed: int

    def __post_init__(self):
        if not (1 <= self.n <= self.N):
            raise ValueError(f"need 1 <= n <= N, got n={self.n}, N={self.N}")
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if bits.shape != (self.N, self.n):
            raise ValueError(f"bit matrix shape {bits.shape} != ({self.N}, {self.n})")
        if bits.max(initial=0) > 1:
            raise ValueError("generator entries must be 0/1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def column_masks(self) -> tuple[int, ...]:
        """Each column as an N-bit integer (bit i of mask j = bits[i, j])."""
        cached = getattr(self, "_masks", None)
        if cached is None:
            packed = np.packbits(self.bits, axis=0, bitorder="little")
            cached = tuple(int.from_bytes(packed[:, j].tobytes(), "little") for j in range(self.n))
            object.__setattr__(self, "_masks", cached)
        return cached

    def encode_int(self, x: int) -> int:
        """Codeword of message x as an N-bit integer."""
        if x < 0 or x >> self.n:
            raise ValueError(f"message {x} does not fit in {self.n} bits")
        cw = 0
        for j, mask in enumerate(self.column_masks()):
            if (x >> j) & 1:
                cw ^= mask
        return cw


def _draw_bits(rng: np.random.Generator, count: int) -> np.ndarray:
    """`count` i.i.d. fair bits from rng's byte stream, LSB-first per byte."""
    raw = rng.bytes((count + 7) // 8)
    return np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=count, bitorder="little")


def sample_generator(n: int, N: int, seed: int) -> GeneratorMatrix:
    """Sample a uniformly random N x n generator matrix, deterministically from seed.

    Every entry is an independent fair coin.  The bit stream is the seeded
    generator's byte stream expanded LSB-first and filled row-major, so an
    independent re-expansion of the same bytes reproduces the matrix.
    """
    if n < 1 or N < n:
        raise ValueError(f"invalid code dimensions n={n}, N={N} (need 1 <= n <= N)")
    rng = np.random.default_rng(seed)
    bits = _draw_bits(rng, N * n).reshape(N, n)
    return GeneratorMatrix(n=n, N=N, bits=bits, seed=int(seed))


def encode(code: GeneratorMatrix, x) -> np.ndarray:
    """Encode an n-bit message (0/1 vector) to its N-bit codeword G.x mod 2."""
    xv = np.asarray(x, dtype=np.uint8)
    if xv.shape != (code.n,):
        raise ValueError(f"message length {xv.shape} != ({code.n},)")
    return (code.bits.astype(np.int64) @ xv.astype(np.int64) % 2).astype(np.uint8)


def hamming(u, v) -> int:
    """Number of positions where two equal-length bit strings differ."""
    uv = np.asarray(u, dtype=np.uint8)
    vv = np.asarray(v, dtype=np.uint8)
    if uv.shape != vv.shape:
        raise ValueError(f"length mismatch: {uv.shape} vs {vv.shape}")
    return int(np.count_nonzero(uv != vv))


def hamming_weight(u) -> int:
    return int(np.count_nonzero(np.asarray(u, dtype=np.uint8)))


@dataclass(frozen=True)
class DistanceBandReport:
    """Outcome of checking all nonzero codeword weights against a band.

    The band is [1/2 - delta, 1/2 + delta] in relative weight, specified by
    its exact square delta_sq = delta**2.  min_rel/max_rel are the extreme
    relative weights seen; `witness` is a violating nonzero message (the one
    with the largest deviation from 1/2) when passed is False.
    """

    delta: float
    delta_sq: Fraction
    min_rel: Fraction
    max_rel: Fraction
    passed: bool
    witness: int | None
    mode: str = "exhaustive"
    checked: int = 0
    miss_probability_bound: float = 0.0


def verify_distance_band(
    code: GeneratorMatrix,
    delta_sq,
    *,
    mode: str = "exhaustive",
    samples: int = 100_000,
    seed: int = 0,
    cap: int = EXHAUSTIVE_CAP,
) -> DistanceBandReport:
    """Check every nonzero codeword's relative weight against the band.

    Exhaustive mode walks all 2**n - 1 nonzero messages in Gray-code order,
    updating the codeword by a single column XOR per step and testing the
    squared band inequality in exact integer arithmetic.  By linearity this
    covers all distinct codeword pairs.  Sampled mode (for n beyond `cap`)
    draws random nonzero messages and reports an explicit miss bound: if at
    least one violating message exists, a clean sampled run happens with
    probability at most (1 - 1/(2**n - 1))**samples.
    """
    delta_sq = Fraction(delta_sq)
    if not 0 < delta_sq <= Fraction(1, 4):
        raise ValueError(f"delta_sq must be in (0, 1/4], got {delta_sq}")
    n, N = code.n, code.N
    masks = code.column_masks()

    w_min = w_max = None
    worst_dev = -1
    witness = None

    if mode == "exhaustive":
        if n > cap:
            raise CapExceeded(f"n={n} exceeds exhaustive cap {cap}; use mode='sampled'")
        checked = (1 << n) - 1
        miss_bound = 0.0
        cw = 0
        for i in range(1, 1 << n):
            cw ^= masks[((i & -i).bit_length() - 1)]
            w = cw.bit_count()
            if w_min is None or w < w_min:
                w_min = w
            if w_max is None or w > w_max:
                w_max = w
            dev = abs(2 * w - N)
            if dev > worst_dev:
                worst_dev = dev
                witness = i ^ (i >> 1)  # Gray code of i is the current message
    elif mode == "sampled":
        rng = np.random.default_rng(seed)
        checked = samples
        space = (1 << n) - 1
        miss_bound = float((1 - 1 / space) ** samples)
        for _ in range(samples):
            z = 1 + int(rng.integers(0, space))
            cw = 0
            zz = z
            while zz:
                j = (zz & -zz).bit_length() - 1
                cw ^= masks[j]
                zz &= zz - 1
            w = cw.bit_count()
            if w_min is None or w < w_min:
                w_min = w
            if w_max is None or w > w_max:
                w_max = w
            dev = abs(2 * w - N)
            if dev > worst_dev:
                worst_dev = dev
                witness = z
    else:
        raise ValueError(f"unknown mode {mode!r}")

    # |w/N - 1/2| <= delta for all w  <=>  q (2w - N)^2 <= 4 p N^2 at the
    # worst deviation, for delta^2 = p/q
    passed = delta_sq.denominator * worst_dev * worst_dev <= 4 * delta_sq.numerator * N * N
    return DistanceBandReport(
        delta=math.sqrt(float(delta_sq)),
        delta_sq=delta_sq,
        min_rel=Fraction(w_min, N),
        max_rel=Fraction(w_max, N),
        passed=passed,
        witness=None if passed else witness,
        mode=mode,
        checked=checked,
        miss_probability_bound=miss_bound,
    )


@dataclass(frozen=True)
class CodeConstruction:
    """A certified code together with its band report and attempt count."""

    code: GeneratorMatrix
    report: DistanceBandReport
    attempts: int


def equality_code_params(n: int, epsilon: Fraction) -> tuple[int, Fraction]:
    """Code length and squared band half-width for target error epsilon.

    N = ceil(16 n / epsilon) and delta**2 = epsilon / 4, i.e. delta =
    sqrt(epsilon)/2, so the certified band forces every off-diagonal
    fingerprint overlap squared below epsilon.
    """
    epsilon = Fraction(epsilon)
    if not 0 < epsilon < Fraction(1, 2):
        raise ValueError(f"epsilon must be in (0, 1/2), got {epsilon}")
    N = math.ceil(Fraction(16 * n) / epsilon)
    return N, epsilon / 4


def make_equality_code(
    n: int,
    epsilon,
    seed: int,
    max_retries: int = DEFAULT_RETRIES,
    *,
    cap: int = EXHAUSTIVE_CAP,
) -> CodeConstruction:
    """Sample-and-verify until a code passes its distance band (Las Vegas).

    Each attempt draws a fresh uniformly random generator from the same
    seeded stream and verifies the band exhaustively.  A single attempt
    fails with probability below 2**-n, so the retry budget is generous.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    epsilon = Fraction(epsilon)
    N, delta_sq = equality_code_params(n, epsilon)
    rng = np.random.default_rng(seed)
    for attempt in range(1, max_retries + 1):
        bits = _draw_bits(rng, N * n).reshape(N, n)
        code = GeneratorMatrix(n=n, N=N, bits=bits, seed=int(seed))
        report = verify_distance_band(code, delta_sq, cap=cap)
        if report.passed:
            return CodeConstruction(code=code, report=report, attempts=attempt)
    raise RetryBudgetExceeded(
        f"no certified code for n={n}, epsilon={epsilon} in {max_retries} attempts"
    )


def save_code(code: GeneratorMatrix, path) -> None:
    """Write the GF2C format: magic, then version/n/N/seed as u64 LE, then
    row-major packed bits with rows padded to byte boundaries (LSB-first)."""
    header = _GF2C_MAGIC + struct.pack("<QQQQ", _GF2C_VERSION, code.n, code.N, code.seed)
    rows = np.packbits(code.bits, axis=1, bitorder="little")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(rows.tobytes())


def load_code(path) -> GeneratorMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _GF2C_MAGIC:
        raise ValueError("not a GF2C file")
    version, n, N, seed = struct.unpack("<QQQQ", blob[4:36])
    if version != _GF2C_VERSION:
        raise ValueError(f"unsupported GF2C version {version}")
    row_bytes = (n + 7) // 8
    packed = np.frombuffer(blob[36 : 36 + N * row_bytes], dtype=np.uint8).reshape(N, row_bytes)
    bits = np.unpackbits(packed, axis=1, count=n, bitorder="little")
    return GeneratorMatrix(n=int(n), N=int(N), bits=bits, seed=int(seed))
