"""Dense complex linear algebra: Haar projectors, overlaps, rank, realification.

Matrices are plain complex128 numpy arrays (validated finite).  Tolerances
are absolute: 1e-9 on matrix identities, 1e-6 on traces; these are far above
double-precision roundoff at the dimensions used here (d up to a few
thousand).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

ATOL_MATRIX = 1e-9
ATOL_TRACE = 1e-6
RANK_TOL = 1e-8

_CMPX_MAGIC = b"CMPX"


def as_complex_matrix(a) -> np.ndarray:
    """Validate and return a finite complex128 matrix."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={m.ndim}")
    if not np.isfinite(m).all():
        raise ValueError("matrix has non-finite entries")
    return m


@dataclass(frozen=True)
class Projector:
    """A rank-r orthogonal projector on C^d.

    Construction checks Hermiticity and idempotence to 1e-9 (max-abs) and
    the trace against r to 1e-6.
    """

    d: int
    r: int
    matrix: np.ndarray

    def __post_init__(self):
        m = as_complex_matrix(self.matrix)
        if m.shape != (self.d, self.d):
            raise ValueError(f"matrix shape {m.shape} != ({self.d}, {self.d})")
        if not (1 <= self.r <= self.d):
            raise ValueError(f"need 1 <= r <= d, got r={self.r}, d={self.d}")
        if np.abs(m - m.conj().T).max() > ATOL_MATRIX:
            raise ValueError("projector is not Hermitian within 1e-9")
        if np.abs(m @ m - m).max() > ATOL_MATRIX:
            raise ValueError("projector is not idempotent within 1e-9")
        if abs(m.trace() - self.r) > ATOL_TRACE:
            raise ValueError(f"trace {m.trace():.3g} differs from rank {self.r}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


def sample_haar_projector(d: int, r: int, rng) -> Projector:
    """Projector onto a uniformly random r-dimensional subspace of C^d.

    Orthonormalizes an i.i.d. standard complex Gaussian d x r matrix; its
    column span is Haar-distributed, and the projector only depends on the
    span, so no phase correction is needed.  Resamples in the measure-zero
    event of a (numerically) rank-deficient draw.
    """
    if not (1 <= r <= d):
        raise ValueError(f"need 1 <= r <= d, got r={r}, d={d}")
    rng = np.random.default_rng(rng)
    while True:
        g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
        q, rr = np.linalg.qr(g)
        diag = np.abs(np.diagonal(rr))
        if diag.min() > 1e-10 * max(diag.max(), 1.0):
            break
    return Projector(d=d, r=r, matrix=q @ q.conj().T)


def projector_overlap(p: Projector, q: Projector) -> float:
    """tr(PQ), a real number in [0, min(rank P, rank Q)]."""
    if p.d != q.d:
        raise ValueError(f"dimension mismatch: {p.d} vs {q.d}")
    # both Hermitian, so tr(PQ) = sum_ij P_ij conj(Q_ij)
    value = np.vdot(q.matrix, p.matrix)
    if abs(value.imag) > ATOL_MATRIX:
        raise ValueError(f"overlap has imaginary part {value.imag:.3g}")
    return float(value.real)


def numeric_rank(m, tol: float = RANK_TOL) -> int:
    """Number of singular values above tol * sigma_max."""
    a = as_complex_matrix(m)
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def realify(v) -> np.ndarray:
    """Embed a complex vector in R^(2d), interleaving real and imaginary parts.

    Coordinate j of the input lands in slots 2j (real part) and 2j+1
    (imaginary part).  The embedding preserves norms and pairwise Euclidean
    distances, and real inner products of images equal the real parts of
    the complex inner products.
    """
    vec = np.asarray(v, dtype=np.complex128).ravel()
    out = np.empty(2 * vec.size, dtype=np.float64)
    out[0::2] = vec.real
    out[1::2] = vec.imag
    return out


def save_matrix(a, path) -> None:
    """CMPX format: magic, rows/cols as u64 LE, then row-major interleaved
    real/imag float64 LE entries."""
    m = as_complex_matrix(a)
    with open(path, "wb") as fh:
        fh.write(_CMPX_MAGIC + struct.pack("<QQ", m.shape[0], m.shape[1]))
        fh.write(np.ascontiguousarray(m).astype("<c16").tobytes())


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _CMPX_MAGIC:
        raise ValueError("not a CMPX file")
    rows, cols = struct.unpack("<QQ", blob[4:20])
    data = np.frombuffer(blob[20 : 20 + rows * cols * 16], dtype="<c16")
    return data.reshape(rows, cols).astype(np.complex128)
