"""Explicit approximate nonnegative and psd factorizations, with audits.

Targets are 0/1 matrices indexed by n-bit strings: the 2**n x 2**n Identity
(the communication matrix of Equality) and SINK composed with XOR, where
SINK reads an orientation of the complete graph K_m and outputs 1 iff some
vertex has every incident edge directed inward.

Nonnegative factorizations here come from the verified private-coin hash
protocol: column (j, h) of the left factor marks inputs whose tape-j hash
equals h, scaled by 1/B, and the right factor is its unscaled transpose.
The product entry is then exactly (colliding tapes)/B: 1 on the diagonal
and strictly below epsilon elsewhere.  Factors are stored as 0/1 integer
matrices with an exact rational scale, so audits are exact.

Psd factorizations reuse the projector-family protocol: message states
P_x/r against measurement projectors P_y, combined across SINK vertices as
direct sums (block-diagonal psd factors).

Orientation convention (fixed, arbitrary): edges of K_m are the pairs
(u, v) with u < v over vertices 0..m-1, ordered lexicographically, one bit
per edge (LSB first); bit 0 orients u -> v, bit 1 orients v -> u.  Under
this convention the all-zeros orientation makes vertex m-1 the sink.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .complexlin import load_matrix, save_matrix
from .protocols_classical import compose_eq, hash_table
from .protocols_quantum import (
    PsdFactorization,
    build_mixed_protocol,
    extract_psd,
    mixed_psd_inputs,
)
from .util import CapExceeded

IDENTITY_CAP = 10
SINK_MATRIX_CAP = 5
SINK_FACTOR_CAP = 4

PSD_SLACK = 1e-9


@dataclass(frozen=True)
class BooleanTargetMatrix:
    """A 0/1 target matrix of size 2**n x 2**n with a descriptive label."""

    label: str
    n: int
    entries: np.ndarray

    def __post_init__(self):
        e = np.ascontiguousarray(self.entries, dtype=np.uint8)
        if e.shape != (1 << self.n, 1 << self.n):
            raise ValueError(f"entries shape {e.shape} != 2**{self.n} square")
        if e.max(initial=0) > 1:
            raise ValueError("target entries must be 0/1")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)


def identity_target(n: int) -> BooleanTargetMatrix:
    return BooleanTargetMatrix(label="Identity", n=n, entries=np.eye(1 << n, dtype=np.uint8))


def edge_list(m: int) -> list[tuple[int, int]]:
    """Edges of K_m as lexicographic (u, v) pairs with u < v."""
    return [(u, v) for u in range(m) for v in range(u + 1, m)]


def vertex_edges(m: int, v: int) -> list[int]:
    """Global indices of the m - 1 edges incident to vertex v."""
    return [i for i, (a, b) in enumerate(edge_list(m)) if v in (a, b)]


def sink_pattern(m: int, v: int) -> int:
    """Local orientation bits (over vertex_edges order) that make v a sink."""
    pattern = 0
    for local, i in enumerate(vertex_edges(m, v)):
        a, _ = edge_list(m)[i]
        if a == v:  # edge (v, b) with b > v must point back into v
            pattern |= 1 << local
    return pattern


def _local_projection(m: int, v: int) -> np.ndarray:
    """Map every n-bit orientation to its local bits at vertex v."""
    n = m * (m - 1) // 2
    values = np.arange(1 << n, dtype=np.int64)
    local = np.zeros(1 << n, dtype=np.int64)
    for pos, i in enumerate(vertex_edges(m, v)):
        local |= ((values >> i) & 1) << pos
    return local


def sink_eval(m: int, orientation: int) -> int:
    """1 iff the orientation of K_m has a vertex with all edges inward."""
    n = m * (m - 1) // 2
    if orientation < 0 or orientation >> n:
        raise ValueError(f"orientation must be an {n}-bit value")
    for v in range(m):
        local = 0
        for pos, i in enumerate(vertex_edges(m, v)):
            local |= ((orientation >> i) & 1) << pos
        if local == sink_pattern(m, v):
            return 1
    return 0


def sink_xor_matrix(m: int, cap: int = SINK_MATRIX_CAP) -> BooleanTargetMatrix:
    """M(x, y) = SINK(x XOR y); row x is row 0 shifted by the group structure."""
    if m > cap:
        raise CapExceeded(f"m={m} exceeds sink matrix cap {cap}")
    n = m * (m - 1) // 2
    row0 = np.array([sink_eval(m, z) for z in range(1 << n)], dtype=np.uint8)
    idx = np.arange(1 << n)
    return BooleanTargetMatrix(label=f"SinkXor({m})", n=n, entries=row0[idx[:, None] ^ idx[None, :]])


@dataclass(frozen=True)
class NonnegFactorization:
    """Entrywise-nonnegative factors A (2**n x k) and B (k x 2**n).

    Stored as 0/1 integer matrices with exact rational scales, so the
    product A B = (a_int b_int) * a_scale * b_scale is an exact rational
    matrix computed in integer arithmetic.
    """

    inner_dim: int
    a_int: np.ndarray
    a_scale: Fraction
    b_int: np.ndarray
    b_scale: Fraction
    block_dims: tuple[int, ...] = ()

    def __post_init__(self):
        a = np.ascontiguousarray(self.a_int, dtype=np.uint8)
        b = np.ascontiguousarray(self.b_int, dtype=np.uint8)
        if a.shape[1] != self.inner_dim or b.shape[0] != self.inner_dim:
            raise ValueError("inner dimensions do not match the factors")
        if a.shape[0] != b.shape[1]:
            raise ValueError("outer dimensions do not match")
        if self.a_scale < 0 or self.b_scale < 0:
            raise ValueError("scales must be nonnegative")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a_int", a)
        object.__setattr__(self, "b_int", b)
        if not self.block_dims:
            object.__setattr__(self, "block_dims", (self.inner_dim,))

    @property
    def scale(self) -> Fraction:
        return self.a_scale * self.b_scale

    def product_counts(self) -> np.ndarray:
        """Integer matrix a_int @ b_int (the product before scaling)."""
        return self.a_int.astype(np.int64) @ self.b_int.astype(np.int64)

    def entry(self, x: int, y: int) -> Fraction:
        c = int(self.a_int[x].astype(np.int64) @ self.b_int[:, y].astype(np.int64))
        return c * self.scale

    def dense_product(self) -> np.ndarray:
        return self.product_counts().astype(np.float64) * float(self.scale)


@dataclass(frozen=True)
class ApproxReport:
    """Entrywise closeness audit of a factorization against a 0/1 target.

    exact=True marks the rational path (classical factors): max_abs_error
    is a Fraction and the pass verdict is an exact comparison.  The psd
    path is floating point with a 1e-9 slack.
    """

    epsilon: Fraction | float
    max_abs_error: Fraction | float
    dim: int
    passed: bool
    worst: tuple[int, int]
    exact: bool


def verify_entrywise(fact, target: BooleanTargetMatrix, epsilon) -> ApproxReport:
    """Dense reconstruction and max-abs-error audit against the target."""
    if isinstance(fact, NonnegFactorization):
        counts = fact.product_counts()
        if counts.shape != target.entries.shape:
            raise ValueError("factorization and target dimensions differ")
        scale = fact.scale
        p, q = scale.numerator, scale.denominator
        if int(counts.max(initial=0)) * p >= 2**62 or q >= 2**62:
            raise ValueError("audit would overflow int64")
        err_num = np.abs(counts * p - target.entries.astype(np.int64) * q)
        worst_flat = int(err_num.argmax())
        worst = tuple(int(t) for t in divmod(worst_flat, counts.shape[1]))
        max_err = Fraction(int(err_num.max()), q)
        return ApproxReport(
            epsilon=Fraction(epsilon),
            max_abs_error=max_err,
            dim=fact.inner_dim,
            passed=max_err <= Fraction(epsilon),
            worst=worst,
            exact=True,
        )
    if isinstance(fact, PsdFactorization):
        recon = fact.reconstruction()
        if recon.shape != target.entries.shape:
            raise ValueError("factorization and target dimensions differ")
        err = np.abs(recon - target.entries)
        worst_flat = int(err.argmax())
        worst = tuple(int(t) for t in divmod(worst_flat, err.shape[1]))
        max_err = float(err.max())
        return ApproxReport(
            epsilon=float(epsilon),
            max_abs_error=max_err,
            dim=fact.dim,
            passed=max_err <= float(epsilon) + PSD_SLACK,
            worst=worst,
            exact=False,
        )
    raise TypeError(f"unsupported factorization type {type(fact).__name__}")


def identity_nonneg(n: int, epsilon, seed: int, *, cap: int = IDENTITY_CAP
                    ) -> tuple[NonnegFactorization, ApproxReport]:
    """Nonnegative factors of the 2**n Identity within epsilon, entrywise.

    A[x, (j, h)] = 1[hash_j(x) = h] / B over tape-message columns and
    B[(j, h), y] = 1[hash_j(y) = h]; the product entry is the fraction of
    tapes on which x and y collide.  Diagonal entries are exactly 1;
    off-diagonal entries are strictly below epsilon by the verified
    protocol.  inner_dim = B * 2**k.
    """
    if n > cap:
        raise CapExceeded(f"n={n} exceeds identity factorization cap {cap}")
    epsilon = Fraction(epsilon)
    proto = compose_eq(n, epsilon, seed)
    table = hash_table(proto)
    K, B, k = 1 << n, proto.B, proto.k
    inner = B << k
    a_int = np.zeros((K, inner), dtype=np.uint8)
    cols = (np.arange(B, dtype=np.int64) << k)[None, :] + table
    a_int[np.repeat(np.arange(K), B), cols.ravel()] = 1
    fact = NonnegFactorization(
        inner_dim=inner,
        a_int=a_int,
        a_scale=Fraction(1, B),
        b_int=a_int.T.copy(),
        b_scale=Fraction(1),
    )
    report = verify_entrywise(fact, identity_target(n), epsilon)
    return fact, report


def identity_psd(n: int, epsilon, seed: int) -> tuple[PsdFactorization, ApproxReport]:
    """Psd factors of the Identity from the verified projector family.

    A_x = P_x / r and B_y = P_y on C^d with d = ceil(2 ceil(sqrt(10 n)) / eps):
    diagonal 1 within 1e-9 and off-diagonal strictly below epsilon.
    """
    epsilon = Fraction(epsilon)
    family = build_mixed_protocol(n, epsilon, seed)
    fact = extract_psd(*mixed_psd_inputs(family))
    report = verify_entrywise(fact, identity_target(n), epsilon)
    return fact, report


def _sub_seeds(seed: int, count: int) -> list[int]:
    """Deterministic per-component seeds derived from a master seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)]


def sink_xor_nonneg(m: int, seed: int, *, cap: int = SINK_FACTOR_CAP
                    ) -> tuple[NonnegFactorization, ApproxReport]:
    """Nonnegative factorization of SINK XOR within 1/3, entrywise.

    SINK(x XOR y) is the sum over vertices v of an Equality on the m - 1
    edge coordinates at v, with Alice's side shifted by the pattern that
    makes v a sink.  Each term reuses identity_nonneg at per-term error
    1/(3m) on the local coordinates (constant on the rest, the rank-1
    all-ones lift), and the factors are concatenated, so errors add to at
    most 1/3 and inner_dim is the exact sum of the per-vertex dimensions.
    """
    if m > cap:
        raise CapExceeded(f"m={m} exceeds sink factorization cap {cap}")
    if m < 2:
        raise ValueError("need m >= 2")
    per_eps = Fraction(1, 3 * m)
    seeds = _sub_seeds(seed, m)
    a_parts, b_parts, dims = [], [], []
    scale = None
    for v in range(m):
        sub, sub_report = identity_nonneg(m - 1, per_eps, seeds[v])
        if not sub_report.passed:
            raise AssertionError("per-vertex identity factorization failed its own audit")
        if scale is None:
            scale = sub.a_scale
        elif scale != sub.a_scale:
            raise AssertionError("per-vertex scales must agree for concatenation")
        local = _local_projection(m, v)
        shifted = local ^ sink_pattern(m, v)
        a_parts.append(sub.a_int[shifted, :])
        b_parts.append(sub.b_int[:, local])
        dims.append(sub.inner_dim)
    fact = NonnegFactorization(
        inner_dim=sum(dims),
        a_int=np.hstack(a_parts),
        a_scale=scale,
        b_int=np.vstack(b_parts),
        b_scale=Fraction(1),
        block_dims=tuple(dims),
    )
    report = verify_entrywise(fact, sink_xor_matrix(m), Fraction(1, 3))
    return fact, report


def sink_xor_psd(m: int, seed: int, *, cap: int = SINK_FACTOR_CAP
                 ) -> tuple[PsdFactorization, ApproxReport]:
    """Psd factorization of SINK XOR within 1/3, as per-vertex direct sums.

    Each vertex contributes a projector family at error 1/(3m) on its
    local coordinates; factors are block-diagonal with one block per
    vertex (shared arrays across inputs), so psd-ness is preserved and the
    total dimension is the exact sum of the per-vertex dimensions.
    """
    if m > cap:
        raise CapExceeded(f"m={m} exceeds sink factorization cap {cap}")
    if m < 2:
        raise ValueError("need m >= 2")
    n = m * (m - 1) // 2
    per_eps = Fraction(1, 3 * m)
    seeds = _sub_seeds(seed, m)
    msg_blocks, acc_blocks, locals_, shifts = [], [], [], []
    dim = 0
    for v in range(m):
        family = build_mixed_protocol(m - 1, per_eps, seeds[v])
        msg_blocks.append([p.matrix / family.r for p in family.projectors])
        acc_blocks.append([p.matrix for p in family.projectors])
        locals_.append(_local_projection(m, v))
        shifts.append(sink_pattern(m, v))
        dim += family.d
    a = {
        x: tuple(msg_blocks[v][int(locals_[v][x]) ^ shifts[v]] for v in range(m))
        for x in range(1 << n)
    }
    b = {
        y: tuple(acc_blocks[v][int(locals_[v][y])] for v in range(m))
        for y in range(1 << n)
    }
    fact = PsdFactorization(dim=dim, a=a, b=b)
    report = verify_entrywise(fact, sink_xor_matrix(m), Fraction(1, 3))
    return fact, report


def save_nonneg(fact: NonnegFactorization, path, meta: dict | None = None) -> None:
    """JSON manifest line, then both 0/1 factors packed row-wise (LSB-first,
    rows padded to byte boundaries, the GF2C bit-packing convention)."""
    rows, inner = fact.a_int.shape
    manifest = {
        "kind": "nonneg",
        "rows": rows,
        "inner_dim": inner,
        "a_scale": str(fact.a_scale),
        "b_scale": str(fact.b_scale),
        "block_dims": list(fact.block_dims),
    }
    manifest.update(meta or {})
    a_packed = np.packbits(fact.a_int, axis=1, bitorder="little")
    b_packed = np.packbits(fact.b_int, axis=1, bitorder="little")
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest, sort_keys=True).encode() + b"\n")
        fh.write(a_packed.tobytes())
        fh.write(b_packed.tobytes())


def load_nonneg(path) -> tuple[NonnegFactorization, dict]:
    with open(path, "rb") as fh:
        manifest = json.loads(fh.readline())
        payload = fh.read()
    if manifest.get("kind") != "nonneg":
        raise ValueError("not a nonneg factorization file")
    rows, inner = manifest["rows"], manifest["inner_dim"]
    a_bytes = rows * ((inner + 7) // 8)
    a_packed = np.frombuffer(payload[:a_bytes], dtype=np.uint8).reshape(rows, -1)
    a_int = np.unpackbits(a_packed, axis=1, count=inner, bitorder="little")
    b_packed = np.frombuffer(payload[a_bytes:], dtype=np.uint8).reshape(inner, -1)
    b_int = np.unpackbits(b_packed, axis=1, count=rows, bitorder="little")
    fact = NonnegFactorization(
        inner_dim=inner,
        a_int=a_int,
        a_scale=Fraction(manifest["a_scale"]),
        b_int=b_int,
        b_scale=Fraction(manifest["b_scale"]),
        block_dims=tuple(manifest["block_dims"]),
    )
    return fact, manifest


def save_psd(fact: PsdFactorization, base_path, meta: dict | None = None) -> None:
    """Manifest JSON plus one CMPX payload of the distinct blocks.

    Blocks shared between factors are stored once; the manifest records,
    for every index and block position, which stored block to use.  Blocks
    are stacked vertically in the CMPX payload in discovery order.
    """
    base = str(base_path)
    unique: dict[int, int] = {}
    blocks: list[np.ndarray] = []

    def block_id(arr: np.ndarray) -> int:
        key = id(arr)
        if key not in unique:
            unique[key] = len(blocks)
            blocks.append(arr)
        return unique[key]

    xs = sorted(fact.a)
    assign_a = [[block_id(bk) for bk in fact.a[x]] for x in xs]
    assign_b = [[block_id(bk) for bk in fact.b[x]] for x in xs]
    manifest = {
        "kind": "psd",
        "dim": fact.dim,
        "indices": xs,
        "block_dims": [int(bk.shape[0]) for bk in next(iter(fact.a.values()))],
        "stored_dims": [int(bk.shape[0]) for bk in blocks],
        "assign_a": assign_a,
        "assign_b": assign_b,
    }
    manifest.update(meta or {})
    with open(base + ".json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    width = max(bk.shape[0] for bk in blocks)
    padded = np.zeros((sum(bk.shape[0] for bk in blocks), width), dtype=np.complex128)
    at = 0
    for bk in blocks:
        padded[at : at + bk.shape[0], : bk.shape[1]] = bk
        at += bk.shape[0]
    save_matrix(padded, base + ".cmpx")


def load_psd(base_path) -> tuple[PsdFactorization, dict]:
    base = str(base_path)
    with open(base + ".json") as fh:
        manifest = json.load(fh)
    if manifest.get("kind") != "psd":
        raise ValueError("not a psd factorization file")
    payload = load_matrix(base + ".cmpx")
    blocks = []
    at = 0
    for w in manifest["stored_dims"]:
        blocks.append(np.ascontiguousarray(payload[at : at + w, :w]))
        at += w
    a = {
        x: tuple(blocks[i] for i in row)
        for x, row in zip(manifest["indices"], manifest["assign_a"])
    }
    b = {
        x: tuple(blocks[i] for i in row)
        for x, row in zip(manifest["indices"], manifest["assign_b"])
    }
    return PsdFactorization(dim=manifest["dim"], a=a, b=b), manifest
