"""
Reference FFT / scan / GEMM algorithms and normalized work accounting.

Every routine here is a plain numpy oracle. The FFT and scan functions
operate on the last axis, so a ``(channels, L)`` array is transformed
channel by channel in one call.

Work accounting
---------------
``work_count`` reports work in *normalized units* and converts them to
real FLOPs with the per-unit constants below:

    GEMM            1 unit = 1 real MAC                     = 2 FLOPs
    FFT (both)      1 unit = 1 complex multiply-add lane op = 8 FLOPs
    scan            1 unit = 1 associative add              = 1 FLOP
    element-wise    1 unit = 1 element, ops_per_element FLOPs each
"""

from __future__ import annotations

import enum
import itertools
import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import (
    EmptyInput,
    LengthMismatch,
    NonPowerOfTwoLength,
    PlanInvalid,
    ShapeMismatch,
    UnderSpecifiedKernel,
)

FLOPS_PER_MAC = 2
FLOPS_PER_FFT_UNIT = 8
FLOPS_PER_SCAN_UNIT = 1
# real MACs needed for one complex MAC on a real-valued datapath
REAL_MACS_PER_COMPLEX_MAC = 4


def is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def ilog2(n: int) -> int:
    return n.bit_length() - 1


class Direction(enum.Enum):
    FORWARD = "forward"
    INVERSE = "inverse"


class FftVariant(enum.Enum):
    VECTOR = "vector"
    GEMM = "gemm"


class ScanVariant(enum.Enum):
    C_SCAN = "c_scan"
    HS_SCAN = "hs_scan"
    B_SCAN = "b_scan"
    TILED = "tiled"


@dataclass(frozen=True)
class FftPlan:
    length: int
    tile: int = 32
    variant: FftVariant = FftVariant.VECTOR
    direction: Direction = Direction.FORWARD

    def violations(self) -> list[str]:
        out = []
        if not is_pow2(self.length):
            out.append(f"length {self.length} is not a power of two")
        if not is_pow2(self.tile) or self.tile < 2:
            out.append(f"tile {self.tile} is not a power of two >= 2")
        if self.tile > self.length:
            out.append(f"tile {self.tile} exceeds length {self.length}")
        elif is_pow2(self.length) and is_pow2(self.tile) and self.length % self.tile:
            out.append("tile does not divide length")
        return out

    def check(self) -> "FftPlan":
        bad = self.violations()
        if bad:
            raise PlanInvalid("; ".join(bad))
        return self

    @property
    def passes(self) -> int:
        """Number of radix-``tile`` passes a Bailey decomposition makes."""
        return max(1, math.ceil(ilog2(self.length) / ilog2(self.tile)))


@dataclass(frozen=True)
class ScanDesc:
    length: int
    variant: ScanVariant = ScanVariant.B_SCAN
    tile: int = 32

    def check(self) -> "ScanDesc":
        if self.length < 1:
            raise PlanInvalid("scan length must be >= 1")
        if not is_pow2(self.tile):
            raise PlanInvalid(f"scan tile {self.tile} is not a power of two")
        return self


# Kernel kinds. KernelDesc (workloads) carries one of these as ``kind``.

@dataclass(frozen=True)
class Gemm:
    M: int
    N: int
    K: int

    name = "GEMM"


@dataclass(frozen=True)
class Fft:
    plan: FftPlan
    batch: int = 1

    name = "FFT"


@dataclass(frozen=True)
class Scan:
    desc: ScanDesc
    channels: int = 1

    name = "SCAN"


@dataclass(frozen=True)
class Elementwise:
    op_name: str
    element_count: int
    ops_per_element: int = 1

    name = "ELEMENTWISE"


KernelKind = Union[Gemm, Fft, Scan, Elementwise]


@dataclass(frozen=True)
class WorkCount:
    normalized_units: float
    real_flops: float
    exact_ops: int

    def __add__(self, other: "WorkCount") -> "WorkCount":
        return WorkCount(
            self.normalized_units + other.normalized_units,
            self.real_flops + other.real_flops,
            self.exact_ops + other.exact_ops,
        )


ZERO_WORK = WorkCount(0.0, 0.0, 0)


@dataclass
class OpCounter:
    """Instrumentation filled in by the algorithms when passed as ``stats``."""

    butterflies: int = 0
    steps: int = 0
    ops: int = 0
    base_transforms: int = 0
    passes: int = 0
    trace: list = field(default_factory=list)


# --------------------------------------------------------------------------
# FFT
# --------------------------------------------------------------------------

def _as_complex(x) -> np.ndarray:
    x = np.asarray(x)
    if x.size == 0 or x.shape[-1] == 0:
        raise EmptyInput("transform input is empty")
    return x.astype(np.complex128, copy=False) if x.dtype != np.complex64 else x


def dft_matrix(n: int, direction: Direction = Direction.FORWARD, dtype=np.complex128) -> np.ndarray:
    sign = -1.0 if direction is Direction.FORWARD else 1.0
    k = np.arange(n)
    return np.exp(sign * 2j * np.pi * np.outer(k, k) / n).astype(dtype)


def dft_naive(x, direction: Direction = Direction.FORWARD) -> np.ndarray:
    """O(N^2) DFT along the last axis; the inverse is scaled by 1/N."""
    x = _as_complex(x)
    n = x.shape[-1]
    out = x @ dft_matrix(n, direction, x.dtype).T
    if direction is Direction.INVERSE:
        out = out / n
    return out


def bit_reverse_indices(n: int) -> np.ndarray:
    bits = ilog2(n)
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft_cooley_tukey(x, direction: Direction = Direction.FORWARD,
                     stats: Optional[OpCounter] = None) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT along the last axis."""
    x = _as_complex(x)
    n = x.shape[-1]
    if not is_pow2(n):
        raise NonPowerOfTwoLength(f"length {n} is not a power of two")
    sign = -1.0 if direction is Direction.FORWARD else 1.0
    y = x[..., bit_reverse_indices(n)].copy()
    batch = y.shape[:-1]
    half = 1
    while half < n:
        m = 2 * half
        w = np.exp(sign * 2j * np.pi * np.arange(half) / m).astype(y.dtype)
        blocks = y.reshape(*batch, n // m, m)
        top = blocks[..., :half].copy()
        bot = blocks[..., half:] * w
        blocks[..., :half] = top + bot
        blocks[..., half:] = top - bot
        if stats is not None:
            stats.butterflies += n // 2
            stats.steps += 1
        half = m
    if direction is Direction.INVERSE:
        y /= n
    return y


def _bailey_forward(x: np.ndarray, tile: int, base, stats: Optional[OpCounter]) -> np.ndarray:
    n = x.shape[-1]
    if n <= tile:
        if stats is not None:
            stats.base_transforms += int(np.prod(x.shape[:-1], dtype=np.int64))
            stats.ops += int(np.prod(x.shape[:-1], dtype=np.int64)) * n * n
        return base(x)
    rows, cols = tile, n // tile
    batch = x.shape[:-1]
    # step 1: x[cols*r + c] -> A[r, c]
    a = x.reshape(*batch, rows, cols)
    # step 2: length-`tile` transforms down each column
    y = _bailey_forward(np.swapaxes(a, -1, -2), tile, base, stats)  # (..., cols, rows)
    # step 3: twiddles exp(-2 pi i c k / n)
    tw = np.exp(-2j * np.pi * np.outer(np.arange(cols), np.arange(rows)) / n).astype(x.dtype)
    y = y * tw
    # step 4: length-`cols` transforms along each row (recursive)
    z = _bailey_forward(np.swapaxes(y, -1, -2), tile, base, stats)  # (..., rows, cols)
    return np.swapaxes(z, -1, -2).reshape(*batch, n)


def fft_bailey(x, plan: FftPlan, stats: Optional[OpCounter] = None) -> np.ndarray:
    """Bailey four-step FFT; length-``plan.tile`` base transforms, recursive rows.

    ``VECTOR`` uses Cooley-Tukey for the base transform, ``GEMM`` multiplies
    by the dense DFT matrix.
    """
    x = _as_complex(x)
    plan = FftPlan(x.shape[-1], plan.tile, plan.variant, plan.direction).check()
    if plan.variant is FftVariant.VECTOR:
        base = fft_cooley_tukey
    else:
        base = dft_naive
    if stats is not None:
        stats.passes = plan.passes
    if plan.direction is Direction.INVERSE:
        return np.conj(_bailey_forward(np.conj(x), plan.tile, base, stats)) / plan.length
    return _bailey_forward(x, plan.tile, base, stats)


def fft_conv(u, k, fft=fft_cooley_tukey) -> np.ndarray:
    """Causal linear convolution of two length-L signals through 2L-point FFTs."""
    u = np.asarray(u)
    k = np.asarray(k)
    if u.shape != k.shape:
        raise LengthMismatch(f"{u.shape} vs {k.shape}")
    n = u.shape[-1]
    pad = [(0, 0)] * (u.ndim - 1) + [(0, n)]
    uf = fft(np.pad(u.astype(np.complex128), pad))
    kf = fft(np.pad(k.astype(np.complex128), pad))
    y = fft(uf * kf, Direction.INVERSE)
    return y[..., :n]


def conv_direct(u, k) -> np.ndarray:
    """O(L^2) causal convolution, used as an oracle."""
    u = np.asarray(u, dtype=np.complex128)
    k = np.asarray(k, dtype=np.complex128)
    n = u.shape[-1]
    return np.convolve(u, k)[:n]


# --------------------------------------------------------------------------
# scans (all exclusive, additive)
# --------------------------------------------------------------------------

def _check_nonempty(x) -> np.ndarray:
    x = np.asarray(x)
    if x.size == 0 or x.shape[-1] == 0:
        raise EmptyInput("scan input is empty")
    return x


def scan_sequential_exclusive(x) -> np.ndarray:
    """C-scan: one element per step, y[0] = 0, y[j] = y[j-1] + x[j-1]."""
    x = _check_nonempty(x)
    if x.ndim > 1:
        return np.stack([scan_sequential_exclusive(row) for row in x.reshape(-1, x.shape[-1])]).reshape(x.shape)
    out = np.empty_like(x)
    out[0] = 0
    out[1:] = list(itertools.accumulate(x[:-1].tolist()))
    return out


def _pad_pow2(x: np.ndarray) -> tuple[np.ndarray, int]:
    n = x.shape[-1]
    m = 1 << max(0, (n - 1).bit_length())
    if m == n:
        return x.copy(), n
    pad = [(0, 0)] * (x.ndim - 1) + [(0, m - n)]
    return np.pad(x, pad), n


def scan_hillis_steele(x, stats: Optional[OpCounter] = None) -> np.ndarray:
    """Step-efficient scan: log2 N inclusive steps, then shift right inserting 0."""
    x = _check_nonempty(x)
    y, n = _pad_pow2(x)
    m = y.shape[-1]
    d = 1
    while d < m:
        shifted = y[..., :-d]
        y[..., d:] = y[..., d:] + shifted
        if stats is not None:
            stats.steps += 1
            stats.ops += m - d
        d *= 2
    out = np.zeros_like(y)
    out[..., 1:] = y[..., :-1]
    return out[..., :n]


def scan_blelloch(x, stats: Optional[OpCounter] = None) -> np.ndarray:
    """Work-efficient scan: up-sweep reduction tree, then down-sweep."""
    x = _check_nonempty(x)
    y, n = _pad_pow2(x)
    m = y.shape[-1]
    d = 1
    while d < m:
        right = slice(2 * d - 1, m, 2 * d)
        left = slice(d - 1, m, 2 * d)
        y[..., right] = y[..., right] + y[..., left]
        if stats is not None:
            stats.steps += 1
            stats.ops += m // (2 * d)
        d *= 2
    y[..., m - 1] = 0
    d = m // 2
    while d >= 1:
        right = slice(2 * d - 1, m, 2 * d)
        left = slice(d - 1, m, 2 * d)
        t = y[..., left].copy()
        y[..., left] = y[..., right]
        y[..., right] = y[..., right] + t
        if stats is not None:
            stats.steps += 1
            stats.ops += m // (2 * d)
        d //= 2
    return y[..., :n]


def scan_tiled(x, tile: int, tile_scan=scan_blelloch) -> np.ndarray:
    """Per-tile exclusive scans, a scan of tile totals, then per-tile offsets."""
    x = _check_nonempty(x)
    if not is_pow2(tile):
        raise PlanInvalid(f"tile {tile} is not a power of two")
    n = x.shape[-1]
    if n <= tile:
        return tile_scan(x)
    tiles = -(-n // tile)
    pad = [(0, 0)] * (x.ndim - 1) + [(0, tiles * tile - n)]
    t = np.pad(x, pad).reshape(*x.shape[:-1], tiles, tile)
    local = tile_scan(t)
    totals = local[..., -1] + t[..., -1]
    offsets = scan_tiled(totals, tile, tile_scan)
    out = local + offsets[..., None]
    return out.reshape(*x.shape[:-1], tiles * tile)[..., :n]


# --------------------------------------------------------------------------
# GEMM
# --------------------------------------------------------------------------

def gemm(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


# --------------------------------------------------------------------------
# work accounting
# --------------------------------------------------------------------------

def _fft_exact_ops(plan: FftPlan) -> int:
    """Lane ops of the recursive Bailey decomposition actually performed."""
    n, r = plan.length, plan.tile
    if plan.variant is FftVariant.VECTOR:
        return n * ilog2(n)
    ops, remaining = 0, ilog2(n)
    step = ilog2(r)
    while remaining > 0:
        radix = 1 << min(step, remaining)
        ops += n * radix
        remaining -= min(step, remaining)
    return ops


def scan_units(desc: ScanDesc) -> tuple[float, int]:
    """(asymptotic units, exact ops) for one channel."""
    n = desc.length
    lg = math.log2(n) if n > 1 else 0.0
    if desc.variant is ScanVariant.C_SCAN:
        return float(n), max(n - 1, 0)
    if desc.variant is ScanVariant.HS_SCAN:
        return n * lg, int(round(n * lg)) - (n - 1)
    # B_SCAN and TILED (Blelloch tiles) are both work-efficient
    return 2.0 * n, 2 * (n - 1)


def fft_units_exact(kind: "Fft") -> Fraction:
    """Normalized FFT work as an exact rational: L log2 L (vector), R L log_R L (GEMM)."""
    n, r = kind.plan.length, kind.plan.tile
    lg = ilog2(n)
    if kind.plan.variant is FftVariant.VECTOR:
        return Fraction(kind.batch * n * lg)
    return Fraction(kind.batch * r * n * lg, ilog2(r))


def work_count(kernel) -> WorkCount:
    """Normalized work of a kernel (or bare kernel kind)."""
    kind = getattr(kernel, "kind", kernel)
    if isinstance(kind, Gemm):
        if min(kind.M, kind.N, kind.K) < 1:
            raise UnderSpecifiedKernel(f"GEMM dims {kind}")
        units = kind.M * kind.N * kind.K
        return WorkCount(float(units), float(units * FLOPS_PER_MAC), units)
    if isinstance(kind, Fft):
        plan = kind.plan
        if plan.violations() or kind.batch < 1:
            raise UnderSpecifiedKernel(f"FFT plan {plan} batch {kind.batch}")
        units = float(fft_units_exact(kind))
        return WorkCount(units, units * FLOPS_PER_FFT_UNIT, kind.batch * _fft_exact_ops(plan))
    if isinstance(kind, Scan):
        if kind.desc.length < 1 or kind.channels < 1:
            raise UnderSpecifiedKernel(f"scan {kind}")
        per, exact = scan_units(kind.desc)
        units = kind.channels * per
        return WorkCount(units, units * FLOPS_PER_SCAN_UNIT, kind.channels * exact)
    if isinstance(kind, Elementwise):
        if kind.element_count < 1 or kind.ops_per_element < 0:
            raise UnderSpecifiedKernel(f"element-wise {kind}")
        ops = kind.element_count * kind.ops_per_element
        return WorkCount(float(kind.element_count), float(ops), ops)
    raise UnderSpecifiedKernel(f"unknown kernel kind {kind!r}")
