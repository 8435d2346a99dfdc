"""One-way quantum Equality protocols and their factorization extracts.

Two constructions:

* Pure-state fingerprints.  A certified binary code C with all nonzero
  relative weights in [1/2 - delta, 1/2 + delta] (delta = sqrt(eps)/2)
  yields unit vectors |phi_x> with +-1/sqrt(N) amplitudes signed by the
  codeword bits.  Bob measures {|phi_y><phi_y|, I - ...}; acceptance is
  |<phi_x|phi_y>|^2 = (1 - 2 d(C(x),C(y))/N)^2, computed here exactly from
  integer Hamming distances.

* Mixed-state projector messages.  Each input gets a Haar-random rank-r
  projector on C^d with r = ceil(sqrt(10 n)) and d = ceil(2 r / eps); Alice
  sends P_x / r, Bob measures {P_y, I - P_y}, so acceptance is
  tr(P_y P_x) / r: exactly 1 when x = y, and below eps for x != y once the
  family is certified pairwise.

Both protocols expose their acceptance-probability matrix as an explicit
psd factorization (message states against measurement operators), and the
pure-state side feeds a realified Gram certificate: unit fingerprints of a
low-error protocol stay near-orthogonal after embedding into R^(2d), with
Gram rank at most 2d.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .complexlin import (
    ATOL_MATRIX,
    Projector,
    as_complex_matrix,
    load_matrix,
    numeric_rank,
    realify,
    sample_haar_projector,
    save_matrix,
)
from .gf2codes import (
    CodeConstruction,
    DistanceBandReport,
    GeneratorMatrix,
    all_messages_bits,
    make_equality_code,
)
from .util import CapExceeded, RetryBudgetExceeded, ceil_log2, worker_count

MIXED_MEMORY_CAP = 12  # 2**n projector matrices must stay materializable
PSD_EIG_FLOOR = -1e-9


@dataclass(frozen=True)
class PureStateFamily:
    """Fingerprint states for all 2**n inputs, stored implicitly via the code.

    states are materialized on demand: only Hamming distances between
    codewords are needed for exact acceptance probabilities.
    """

    n: int
    N: int
    code: GeneratorMatrix
    epsilon: Fraction
    band: DistanceBandReport
    attempts: int = 1

    @property
    def qubits(self) -> int:
        return ceil_log2(self.N)

    def distance(self, x: int, y: int) -> int:
        """d(C(x), C(y)), via linearity the weight of C(x XOR y)."""
        return self.code.encode_int(x ^ y).bit_count()

    def codeword_table(self) -> np.ndarray:
        """(2**n, N) matrix of all codewords."""
        msgs = all_messages_bits(self.n).astype(np.int64)
        return ((msgs @ self.code.bits.astype(np.int64).T) % 2).astype(np.uint8)

    def state(self, x: int) -> np.ndarray:
        """Unit vector with amplitudes (-1)**C(x)_i / sqrt(N)."""
        raw = self.code.encode_int(x).to_bytes((self.N + 7) // 8, "little")
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=self.N, bitorder="little")
        return ((1 - 2 * bits.astype(np.int64)) / math.sqrt(self.N)).astype(np.complex128)

    def states_map(self) -> dict[int, np.ndarray]:
        table = self.codeword_table().astype(np.float64)
        stack = (1 - 2 * table) / math.sqrt(self.N)
        return {x: stack[x].astype(np.complex128) for x in range(1 << self.n)}

    def inner(self, x: int, y: int) -> Fraction:
        """<phi_x|phi_y> = 1 - 2 d(C(x), C(y)) / N, an exact rational."""
        return 1 - Fraction(2 * self.distance(x, y), self.N)


def build_pure_protocol(n: int, epsilon, seed: int, max_retries: int = 16) -> PureStateFamily:
    """Fingerprint family over a certified code with N = ceil(16 n / eps)."""
    epsilon = Fraction(epsilon)
    built: CodeConstruction = make_equality_code(n, epsilon, seed, max_retries)
    return PureStateFamily(
        n=n,
        N=built.code.N,
        code=built.code,
        epsilon=epsilon,
        band=built.report,
        attempts=built.attempts,
    )


def pure_acceptance(family: PureStateFamily, x: int, y: int) -> Fraction:
    """Exact probability Bob's fingerprint measurement accepts: <phi_x|phi_y>^2."""
    return family.inner(x, y) ** 2


def max_pure_acceptance(family: PureStateFamily) -> tuple[Fraction, tuple[int, int]]:
    """Worst acceptance over unequal inputs, by enumerating differences."""
    N = family.N
    masks = family.code.column_masks()
    worst_dev = -1
    worst_z = 1
    cw = 0
    for i in range(1, 1 << family.n):
        cw ^= masks[(i & -i).bit_length() - 1]
        dev = abs(N - 2 * cw.bit_count())
        if dev > worst_dev:
            worst_dev = dev
            worst_z = i ^ (i >> 1)
    return Fraction(worst_dev, N) ** 2, (0, worst_z)


def pure_acceptance_matrix(family: PureStateFamily, materialized: bool = False) -> np.ndarray:
    """Acceptance probabilities for all pairs.

    materialized=True simulates the measurement on explicit state vectors;
    the default uses the exact distance form.
    """
    K = 1 << family.n
    if materialized:
        table = family.codeword_table().astype(np.float64)
        stack = (1 - 2 * table) / math.sqrt(family.N)
        gram = stack @ stack.T
        return gram**2
    cw = [family.code.encode_int(x) for x in range(K)]
    out = np.empty((K, K), dtype=np.float64)
    for x in range(K):
        for y in range(x, K):
            p = float((1 - Fraction(2 * (cw[x] ^ cw[y]).bit_count(), family.N)) ** 2)
            out[x, y] = out[y, x] = p
    return out


@dataclass(frozen=True)
class ProjectorFamily:
    """2**n rank-r projector messages on C^d, certified pairwise when verified."""

    n: int
    d: int
    r: int
    epsilon: Fraction
    projectors: tuple[Projector, ...]
    verified: bool
    seed: int
    resamples: int = 0

    @property
    def qubits(self) -> int:
        return ceil_log2(self.d)

    def stack(self) -> np.ndarray:
        return np.stack([p.matrix for p in self.projectors])


def mixed_protocol_params(n: int, epsilon) -> tuple[int, int]:
    """r = ceil(sqrt(10 n)), d = ceil(2 r / epsilon)."""
    epsilon = Fraction(epsilon)
    if not 0 < epsilon < Fraction(1, 2):
        raise ValueError(f"epsilon must be in (0, 1/2), got {epsilon}")
    r = math.isqrt(10 * n)
    if r * r < 10 * n:
        r += 1
    d = math.ceil(Fraction(2 * r) / epsilon)
    return r, d


def overlap_matrix(stack: np.ndarray) -> np.ndarray:
    """All pairwise tr(P_x P_y) for a (K, d, d) Hermitian stack.

    Row blocks are distributed over EQCOMM_THREADS workers; entries are
    independent, so chunking does not change the arithmetic.
    """
    K = stack.shape[0]
    flat = stack.reshape(K, -1)
    workers = min(worker_count(), K)
    if workers <= 1 or K < 16:
        return (flat @ flat.conj().T).real
    bounds = np.linspace(0, K, workers + 1, dtype=int)
    out = np.empty((K, K), dtype=np.float64)

    def fill(lo: int, hi: int) -> None:
        out[lo:hi] = (flat[lo:hi] @ flat.conj().T).real

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(lambda b: fill(*b), zip(bounds[:-1], bounds[1:])))
    return out


def build_mixed_protocol(
    n: int,
    epsilon,
    seed: int,
    max_retries: int = 64,
    *,
    cap: int = MIXED_MEMORY_CAP,
) -> ProjectorFamily:
    """Sample 2**n Haar projectors and certify all pairwise overlaps.

    Certification requires tr(P_x P_y) < eps * r for every unequal pair.
    On violations only the projectors appearing in some violated pair are
    resampled, preserving already-certified pairs; overlap concentration
    makes violations rare at these parameters.
    """
    if n > cap:
        raise CapExceeded(f"n={n} exceeds mixed-protocol memory cap {cap}")
    epsilon = Fraction(epsilon)
    r, d = mixed_protocol_params(n, epsilon)
    K = 1 << n
    threshold = float(epsilon * r)
    rng = np.random.default_rng(seed)
    projectors = [sample_haar_projector(d, r, rng) for _ in range(K)]
    resamples = 0
    for _ in range(max_retries):
        overlaps = overlap_matrix(np.stack([p.matrix for p in projectors]))
        np.fill_diagonal(overlaps, 0.0)
        bad = np.unique(np.nonzero(overlaps >= threshold)[0])
        if bad.size == 0:
            return ProjectorFamily(
                n=n, d=d, r=r, epsilon=epsilon, projectors=tuple(projectors),
                verified=True, seed=int(seed), resamples=resamples,
            )
        for i in bad.tolist():
            projectors[i] = sample_haar_projector(d, r, rng)
            resamples += 1
    raise RetryBudgetExceeded(
        f"projector family for n={n}, epsilon={epsilon} not certified in {max_retries} rounds"
    )


def mixed_acceptance(family: ProjectorFamily, x: int, y: int) -> float:
    """Probability Bob's {P_y, I - P_y} measurement accepts rho_x = P_x / r."""
    px, py = family.projectors[x], family.projectors[y]
    value = np.vdot(py.matrix, px.matrix)
    if abs(value.imag) > ATOL_MATRIX:
        raise ValueError(f"acceptance has imaginary part {value.imag:.3g}")
    return float(value.real) / family.r


def mixed_acceptance_matrix(family: ProjectorFamily) -> np.ndarray:
    return overlap_matrix(family.stack()) / family.r


def max_mixed_overlap(family: ProjectorFamily) -> tuple[float, tuple[int, int]]:
    """Largest tr(P_x P_y) over unequal pairs, with an attaining pair."""
    overlaps = overlap_matrix(family.stack())
    np.fill_diagonal(overlaps, -np.inf)
    flat = int(np.argmax(overlaps))
    x, y = divmod(flat, overlaps.shape[1])
    return float(overlaps[x, y]), (x, y)


def _check_psd(m: np.ndarray, label: str, upper: float | None = None) -> None:
    if np.abs(m - m.conj().T).max() > ATOL_MATRIX:
        raise ValueError(f"{label} is not Hermitian within 1e-9")
    eigs = np.linalg.eigvalsh(m)
    if eigs.min() < PSD_EIG_FLOOR:
        raise ValueError(f"{label} has eigenvalue {eigs.min():.3g} below -1e-9")
    if upper is not None and eigs.max() > upper + 1e-9:
        raise ValueError(f"{label} has eigenvalue {eigs.max():.3g} above {upper}")


@dataclass(frozen=True)
class PsdFactorization:
    """Entrywise factorization M(x, y) = tr(A_x B_y) with psd factors.

    Factors are direct sums: each index maps to a tuple of psd blocks, one
    per position, and dim is the total block dimension.  Repeated blocks
    may share the same array object; reconstruction caches traces by block
    identity, so block-structured families stay cheap.
    """

    dim: int
    a: dict[int, tuple[np.ndarray, ...]]
    b: dict[int, tuple[np.ndarray, ...]]

    def __post_init__(self):
        if set(self.a) != set(self.b):
            raise ValueError("row and column factor index sets differ")
        first = next(iter(self.a.values()))
        dims = tuple(block.shape[0] for block in first)
        if sum(dims) != self.dim:
            raise ValueError(f"total block dimension {sum(dims)} != dim {self.dim}")
        seen: set[int] = set()
        for side, factors in (("A", self.a), ("B", self.b)):
            for idx, blocks in factors.items():
                if tuple(bk.shape[0] for bk in blocks) != dims:
                    raise ValueError(f"{side}[{idx}] block dimensions differ from {dims}")
                for bk in blocks:
                    if id(bk) in seen:
                        continue
                    _check_psd(as_complex_matrix(bk), f"{side}[{idx}] block")
                    seen.add(id(bk))

    def entry(self, x: int, y: int) -> float:
        value = sum(np.vdot(bb, ab) for ab, bb in zip(self.a[x], self.b[y]))
        if abs(value.imag) > ATOL_MATRIX:
            raise ValueError(f"reconstruction entry has imaginary part {value.imag:.3g}")
        return float(value.real)

    def reconstruction(self) -> np.ndarray:
        """Dense tr(A_x B_y) matrix over sorted indices, trace-cached by block id."""
        xs = sorted(self.a)
        cache: dict[tuple[int, int], float] = {}
        out = np.empty((len(xs), len(xs)), dtype=np.float64)
        for i, x in enumerate(xs):
            for j, y in enumerate(xs):
                total = 0.0
                for ab, bb in zip(self.a[x], self.b[y]):
                    key = (id(ab), id(bb))
                    if key not in cache:
                        value = np.vdot(bb, ab)
                        if abs(value.imag) > ATOL_MATRIX:
                            raise ValueError(
                                f"reconstruction entry has imaginary part {value.imag:.3g}"
                            )
                        cache[key] = float(value.real)
                    total += cache[key]
                out[i, j] = total
        return out

    def dense_factor(self, side: str, idx: int) -> np.ndarray:
        """Materialize one factor as an explicit block-diagonal matrix."""
        blocks = (self.a if side == "A" else self.b)[idx]
        out = np.zeros((self.dim, self.dim), dtype=np.complex128)
        at = 0
        for bk in blocks:
            w = bk.shape[0]
            out[at : at + w, at : at + w] = bk
            at += w
        return out


def extract_psd(messages, accept_ops) -> PsdFactorization:
    """Read off the psd factorization of a one-way protocol's acceptance matrix.

    messages maps x to the trace-1 psd state Alice sends; accept_ops maps y
    to Bob's accepting POVM element (psd, at most identity).  Acceptance is
    tr(rho_x E_y), so A_x = rho_x and B_y = E_y reconstruct the acceptance
    matrix entrywise with factor dimension d.
    """
    if set(messages) != set(accept_ops):
        raise ValueError("messages and accept_ops must share an index set")
    a: dict[int, tuple[np.ndarray, ...]] = {}
    b: dict[int, tuple[np.ndarray, ...]] = {}
    dim = None
    for idx in messages:
        rho = as_complex_matrix(messages[idx])
        eff = as_complex_matrix(accept_ops[idx])
        if dim is None:
            dim = rho.shape[0]
        if rho.shape != (dim, dim) or eff.shape != (dim, dim):
            raise ValueError("all factors must share one dimension")
        _check_psd(rho, f"message[{idx}]")
        if abs(rho.trace().real - 1.0) > 1e-6:
            raise ValueError(f"message[{idx}] trace {rho.trace().real:.6g} != 1")
        _check_psd(eff, f"accept_op[{idx}]", upper=1.0)
        a[idx] = (rho,)
        b[idx] = (eff,)
    return PsdFactorization(dim=dim, a=a, b=b)


def pure_psd_inputs(family: PureStateFamily) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
    """Rank-1 density matrices and measurement projectors of the pure protocol."""
    states = family.states_map()
    dense = {x: np.outer(v, v.conj()) for x, v in states.items()}
    return dense, dense


def mixed_psd_inputs(family: ProjectorFamily) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
    """Message states P_x / r and accepting projectors P_y of the mixed protocol."""
    messages = {x: p.matrix / family.r for x, p in enumerate(family.projectors)}
    accept = {y: p.matrix for y, p in enumerate(family.projectors)}
    return messages, accept


class ProtocolPreconditionError(ValueError):
    """The supplied protocol does not compute Equality to the claimed error."""

    def __init__(self, kind: str, pair: tuple[int, int], value: float):
        self.kind = kind
        self.pair = pair
        self.value = value
        super().__init__(f"{kind} violated at pair {pair}: acceptance {value:.6g}")


@dataclass(frozen=True)
class LowerBoundCertificate:
    """Certified chain from a low-error one-way protocol to a near-identity Gram.

    band_ok asserts every pair of message states has squared distance in
    [2 - 2 sqrt(eps (1 - eps)), 2 + 4 sqrt(eps)]; the realified Gram matrix
    then has unit diagonal, off-diagonal magnitude at most 2 sqrt(eps), and
    rank at most twice the message dimension.
    """

    epsilon: float
    d: int
    band_ok: bool
    gram: np.ndarray
    offdiag_max: float
    numeric_rank_of_gram: int
    band_min: float
    band_max: float


def _acceptance_against_op(op: np.ndarray, states: np.ndarray) -> np.ndarray:
    """||P phi||^2 for every row phi of `states`.

    1-D op: unit vector spanning a rank-1 accepting subspace.
    2-D op: explicit projector matrix.
    """
    if op.ndim == 1:
        norm = np.linalg.norm(op)
        if abs(norm - 1.0) > 1e-6:
            raise ValueError("rank-1 accept op must be a unit vector")
        amps = states @ op.conj()
        return np.abs(amps) ** 2
    if np.abs(op - op.conj().T).max() > 1e-8 or np.abs(op @ op - op).max() > 1e-8:
        raise ValueError("accept op must be a projector (within 1e-8)")
    proj = states @ op.T
    return np.linalg.norm(proj, axis=1) ** 2


def certify_lower_bound(states, accept_ops, epsilon) -> LowerBoundCertificate:
    """Verify a one-way pure-state Equality protocol and build its Gram certificate.

    Precondition (checked first, with witness on failure): acceptance at
    least 1 - eps on the diagonal, at most eps off it.  Then every pairwise
    distance of the unit message vectors is checked against the band
    implied by those acceptance constraints, the states are realified, and
    the resulting Gram matrix is reported with its off-diagonal maximum and
    numeric rank.
    """
    eps = float(epsilon)
    if not 0 <= eps <= 0.5:
        raise ValueError(f"epsilon must be in [0, 1/2], got {eps}")
    keys = sorted(states)
    if sorted(accept_ops) != keys:
        raise ValueError("states and accept_ops must share an index set")
    stack = np.array([np.asarray(states[x], dtype=np.complex128).ravel() for x in keys])
    d = stack.shape[1]

    for j, y in enumerate(keys):
        probs = _acceptance_against_op(np.asarray(accept_ops[y], dtype=np.complex128), stack)
        for i, x in enumerate(keys):
            if x == y:
                if probs[i] < 1 - eps - 1e-9:
                    raise ProtocolPreconditionError("completeness", (x, y), float(probs[i]))
            elif probs[i] > eps + 1e-9:
                raise ProtocolPreconditionError("soundness", (x, y), float(probs[i]))

    gram_c = stack @ stack.conj().T
    norms = np.real(np.diagonal(gram_c))
    dist_sq = norms[:, None] + norms[None, :] - 2 * np.real(gram_c)
    off = ~np.eye(len(keys), dtype=bool)
    band_lo = 2 - 2 * math.sqrt(eps * (1 - eps))
    band_hi = 2 + 4 * math.sqrt(eps)
    band_min = float(dist_sq[off].min())
    band_max = float(dist_sq[off].max())
    band_ok = band_min >= band_lo - 1e-9 and band_max <= band_hi + 1e-9

    real_stack = np.array([realify(stack[i]) for i in range(len(keys))])
    gram = real_stack @ real_stack.T
    offdiag_max = float(np.abs(gram[off]).max())
    return LowerBoundCertificate(
        epsilon=eps,
        d=d,
        band_ok=band_ok,
        gram=gram,
        offdiag_max=offdiag_max,
        numeric_rank_of_gram=numeric_rank(gram),
        band_min=band_min,
        band_max=band_max,
    )


def save_pure_family(family: PureStateFamily, base_path) -> None:
    """Manifest JSON next to a CMPX matrix of the materialized states."""
    base = str(base_path)
    manifest = {
        "kind": "pure",
        "n": family.n,
        "N": family.N,
        "epsilon": str(family.epsilon),
        "seed": family.code.seed,
        "verified": family.band.passed,
    }
    with open(base + ".json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    table = family.codeword_table().astype(np.float64)
    save_matrix((1 - 2 * table) / math.sqrt(family.N), base + ".cmpx")


def save_mixed_family(family: ProjectorFamily, base_path) -> None:
    """Manifest JSON next to a CMPX matrix of vertically stacked projectors."""
    base = str(base_path)
    manifest = {
        "kind": "mixed",
        "n": family.n,
        "r": family.r,
        "d": family.d,
        "epsilon": str(family.epsilon),
        "seed": family.seed,
        "verified": family.verified,
    }
    with open(base + ".json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    save_matrix(family.stack().reshape(-1, family.d), base + ".cmpx")


def load_family(base_path) -> tuple[dict, np.ndarray]:
    """Read back a family export: (manifest, payload matrix)."""
    base = str(base_path)
    with open(base + ".json") as fh:
        manifest = json.load(fh)
    return manifest, load_matrix(base + ".cmpx")


def write_acceptance_csv(matrix: np.ndarray, path) -> None:
    """Acceptance matrix as 'x,y,probability' rows."""
    with open(path, "w") as fh:
        fh.write("x,y,probability\n")
        for x in range(matrix.shape[0]):
            for y in range(matrix.shape[1]):
                fh.write(f"{x},{y},{float(matrix[x, y])!r}\n")
