"""
Value-level model of one PCU: a stages x lanes grid of functional units.

Wiring convention. Boundary ``b`` (1..stages) feeds stage ``b``. Boundary 1
draws from the input frame after ``input_perm`` has been applied; later
boundaries draw from the previous stage's outputs. A link flagged
``from_input`` reads the raw (unpermuted) input frame instead, which is how
systolic mode forwards the activation row down the pipeline. Ports with no
incoming link read 0.

``input_perm`` is fixed wiring on the input side of the first stage. FFT mode
uses it for the bit-reversal permutation, HS-scan for the one-lane shift that
turns its inclusive scan into an exclusive one (entry -1 means "read 0").
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    ConfigInvalid,
    IllegalSelection,
    NonPowerOfTwoLanes,
    UnsupportedGeometry,
    WidthMismatch,
)
from .kernels import Direction, bit_reverse_indices, ilog2, is_pow2


class FuOpKind(enum.Enum):
    ADD = "ADD"
    MUL = "MUL"
    MAC = "MAC"
    PASS = "PASS"


class Port(enum.Enum):
    LANE_A = "LANE_A"
    LANE_B = "LANE_B"
    STAGE_IN = "STAGE_IN"
    CONST = "CONST"


class PcuMode(enum.Enum):
    ELEMENTWISE = "ELEMENTWISE"
    SYSTOLIC = "SYSTOLIC"
    REDUCTION = "REDUCTION"
    FFT = "FFT"
    HS_SCAN = "HS_SCAN"
    B_SCAN = "B_SCAN"


BASELINE_MODES = (PcuMode.ELEMENTWISE, PcuMode.SYSTOLIC, PcuMode.REDUCTION)
# MAC is a systolic op; FFT butterflies also use it (t + w*b in one FU).
MAC_MODES = (PcuMode.SYSTOLIC, PcuMode.FFT)
_PORT_INDEX = {Port.LANE_A: 0, Port.LANE_B: 1, Port.STAGE_IN: 2, Port.CONST: 3}


@dataclass(frozen=True)
class PcuGeometry:
    lanes: int
    stages: int

    def check(self) -> "PcuGeometry":
        if self.stages < 1 or self.lanes < 1:
            raise UnsupportedGeometry(f"{self}: lanes and stages must be >= 1")
        if not is_pow2(self.lanes):
            raise NonPowerOfTwoLanes(f"lanes={self.lanes} is not a power of two")
        return self

    def __str__(self):
        return f"{self.lanes}x{self.stages}"


@dataclass(frozen=True)
class FuConfig:
    """One FU program. MAC computes ``accumulate + sel0 * sel1``."""

    op: FuOpKind = FuOpKind.PASS
    input_select: tuple = (Port.STAGE_IN, Port.CONST)
    constant: complex = 0
    accumulate: Port = Port.STAGE_IN

    def problems(self) -> list[str]:
        sel = tuple(self.input_select)
        out = []
        if len(sel) != 2 or len(set(sel)) != 2:
            out.append(f"input_select {sel} must be two distinct ports")
        if any(not isinstance(p, Port) for p in sel):
            out.append(f"input_select {sel} contains a non-port")
        if self.op is FuOpKind.MAC and self.accumulate in sel:
            out.append(f"MAC accumulate port {self.accumulate.value} is also selected")
        return out


PASS = FuConfig()


@dataclass(frozen=True)
class Link:
    src_lane: int
    dst_lane: int
    port: Port
    from_input: bool = False


@dataclass(frozen=True)
class PcuConfig:
    geometry: PcuGeometry
    mode: PcuMode
    fu: tuple  # stages x lanes of FuConfig
    links: tuple  # links[b-1] is the link tuple for boundary b
    input_perm: tuple = ()  # empty = identity

    def fu_at(self, stage: int, lane: int) -> FuConfig:
        return self.fu[stage - 1][lane]


@dataclass(frozen=True, order=True)
class Violation:
    stage: int
    lane: int
    rule: str
    port: str = ""
    detail: str = field(default="", compare=False)

    def __str__(self):
        if self.stage == 0:
            return self.rule
        where = f"{self.stage},{self.lane}" + (f",{self.port}" if self.port else "")
        return f"{self.rule} at ({where})"


def min_stages(mode: PcuMode, lanes: int) -> int:
    lg = ilog2(lanes) if is_pow2(lanes) else 0
    if mode in (PcuMode.FFT, PcuMode.HS_SCAN, PcuMode.REDUCTION):
        return max(1, lg)
    if mode is PcuMode.B_SCAN:
        return max(1, 2 * lg)
    return 1


# --------------------------------------------------------------------------
# single FU
# --------------------------------------------------------------------------

def _operands(cfg: FuConfig, lane_a, lane_b, stage_in):
    ports = {Port.LANE_A: lane_a, Port.LANE_B: lane_b, Port.STAGE_IN: stage_in,
             Port.CONST: cfg.constant}
    return ports[cfg.input_select[0]], ports[cfg.input_select[1]], ports[cfg.accumulate]


def fu_eval(cfg: FuConfig, lane_a, lane_b, stage_in):
    probs = cfg.problems()
    if probs:
        raise IllegalSelection("; ".join(probs))
    s0, s1, acc = _operands(cfg, lane_a, lane_b, stage_in)
    if cfg.op is FuOpKind.ADD:
        return s0 + s1
    if cfg.op is FuOpKind.MUL:
        return s0 * s1
    if cfg.op is FuOpKind.MAC:
        return acc + s0 * s1
    return s0


# --------------------------------------------------------------------------
# mode builders
# --------------------------------------------------------------------------

def _fu(op, a, b, const=0, acc=Port.STAGE_IN):
    return FuConfig(op, (a, b), const, acc)


class _Grid:
    def __init__(self, g: PcuGeometry):
        self.g = g
        self.fu = [[PASS] * g.lanes for _ in range(g.stages)]
        self.links = [[Link(j, j, Port.STAGE_IN) for j in range(g.lanes)] for _ in range(g.stages)]
        self.perm: tuple = ()

    def set(self, stage, lane, cfg: FuConfig, *extra: Link):
        self.fu[stage - 1][lane] = cfg
        self.links[stage - 1].extend(extra)

    def done(self, mode) -> PcuConfig:
        return PcuConfig(self.g, mode, tuple(tuple(r) for r in self.fu),
                         tuple(tuple(b) for b in self.links), self.perm)


def _build_elementwise(grid: _Grid, ops: Sequence = ()):
    if len(ops) > grid.g.stages:
        raise UnsupportedGeometry(f"{len(ops)} ops exceed {grid.g.stages} stages")
    for s, (op, c) in enumerate(ops, start=1):
        op = FuOpKind(op) if not isinstance(op, FuOpKind) else op
        for j in range(grid.g.lanes):
            grid.set(s, j, _fu(op, Port.STAGE_IN, Port.CONST, c))


def _build_systolic(grid: _Grid, weights):
    g = grid.g
    w = np.asarray(weights)
    depth, width = w.shape
    if depth > min(g.stages, g.lanes) or width > g.lanes:
        raise UnsupportedGeometry(f"weight tile {w.shape} does not fit {g}")
    for s in range(1, depth + 1):
        for j in range(width):
            # stage 1 starts the partial sum; later stages accumulate onto STAGE_IN
            op = FuOpKind.MUL if s == 1 else FuOpKind.MAC
            grid.set(s, j, _fu(op, Port.LANE_A, Port.CONST, w[s - 1, j].item()),
                     Link(s - 1, j, Port.LANE_A, from_input=True))


def _build_reduction(grid: _Grid):
    for s in range(1, ilog2(grid.g.lanes) + 1):
        half, step = 1 << (s - 1), 1 << s
        for j in range(0, grid.g.lanes, step):
            grid.set(s, j, _fu(FuOpKind.ADD, Port.STAGE_IN, Port.LANE_A),
                     Link(j + half, j, Port.LANE_A))


def _build_fft(grid: _Grid, direction: Direction, post_scale):
    g = grid.g
    levels = ilog2(g.lanes)
    sign = -1.0 if direction is Direction.FORWARD else 1.0
    grid.perm = tuple(int(i) for i in bit_reverse_indices(g.lanes))
    for s in range(1, levels + 1):
        half = 1 << (s - 1)
        for j in range(g.lanes):
            p = j ^ half
            k = (j & (half - 1))
            w = complex(np.exp(sign * 2j * np.pi * k / (2 * half)))
            if j & half == 0:
                # top: x_t + w * x_b
                grid.set(s, j, _fu(FuOpKind.MAC, Port.LANE_B, Port.CONST, w, Port.STAGE_IN),
                         Link(p, j, Port.LANE_B))
            else:
                # bottom: x_t - w * x_b, with x_t arriving from the partner lane
                grid.set(s, j, _fu(FuOpKind.MAC, Port.STAGE_IN, Port.CONST, -w, Port.LANE_A),
                         Link(p, j, Port.LANE_A))
    if post_scale is not None:
        scale = np.asarray(post_scale).reshape(-1)
        if scale.size != g.lanes:
            raise WidthMismatch(f"post_scale has {scale.size} entries, lanes={g.lanes}")
        if g.stages < levels + 1:
            raise UnsupportedGeometry(f"post-scale needs {levels + 1} stages, {g} has {g.stages}")
        for j in range(g.lanes):
            grid.set(levels + 1, j, _fu(FuOpKind.MUL, Port.STAGE_IN, Port.CONST, complex(scale[j])))


def _build_hs_scan(grid: _Grid):
    g = grid.g
    grid.perm = (-1,) + tuple(range(g.lanes - 1))
    for s in range(1, ilog2(g.lanes) + 1):
        h = 1 << (s - 1)
        for j in range(h, g.lanes):
            grid.set(s, j, _fu(FuOpKind.ADD, Port.STAGE_IN, Port.LANE_A), Link(j - h, j, Port.LANE_A))


def _build_b_scan(grid: _Grid):
    g = grid.g
    n = g.lanes
    lg = ilog2(n)
    for d in range(lg):
        stride, half = 2 << d, 1 << d
        for k in range(stride - 1, n, stride):
            grid.set(d + 1, k, _fu(FuOpKind.ADD, Port.STAGE_IN, Port.LANE_A), Link(k - half, k, Port.LANE_A))
    for i, d in enumerate(range(lg - 1, -1, -1)):
        s = lg + 1 + i
        stride, half = 2 << d, 1 << d
        for k in range(stride - 1, n, stride):
            left = k - half
            if i == 0:
                # root: identity inserted through the CONST input
                grid.set(s, k, _fu(FuOpKind.ADD, Port.LANE_A, Port.CONST, 0), Link(left, k, Port.LANE_A))
                grid.set(s, left, _fu(FuOpKind.PASS, Port.CONST, Port.STAGE_IN, 0))
            else:
                grid.set(s, k, _fu(FuOpKind.ADD, Port.STAGE_IN, Port.LANE_A), Link(left, k, Port.LANE_A))
                grid.set(s, left, _fu(FuOpKind.PASS, Port.LANE_A, Port.STAGE_IN), Link(k, left, Port.LANE_A))


def build_mode_config(mode: PcuMode, geometry: PcuGeometry, *,
                      ops: Sequence = (),
                      weights=None,
                      tile: Optional[int] = None,
                      direction: Direction = Direction.FORWARD,
                      post_scale=None,
                      scan_op: FuOpKind = FuOpKind.ADD) -> PcuConfig:
    """Program a PCU for ``mode``.

    ops: ELEMENTWISE chain of ``(FuOpKind, constant)`` applied as op(x, c).
    weights: SYSTOLIC weight tile W (K x N); a frame carries one row of A in
        lanes 0..K-1 and leaves with that row of A @ W in lanes 0..N-1.
    tile, direction, post_scale: FFT size (must equal lanes), transform
        direction and an optional per-lane multiply after the last level.
        The inverse is unnormalized; pass ``post_scale = 1/R`` to normalize.
    scan_op: only ADD is supported (exclusive prefix sum).
    """
    geometry.check()
    need = min_stages(mode, geometry.lanes)
    if geometry.stages < need:
        raise UnsupportedGeometry(f"{mode.value} needs >= {need} stages, {geometry} has {geometry.stages}")
    grid = _Grid(geometry)
    if mode is PcuMode.ELEMENTWISE:
        _build_elementwise(grid, ops)
    elif mode is PcuMode.SYSTOLIC:
        depth = min(geometry.stages, geometry.lanes)
        _build_systolic(grid, np.ones((depth, geometry.lanes), dtype=np.int64) if weights is None else weights)
    elif mode is PcuMode.REDUCTION:
        _build_reduction(grid)
    elif mode is PcuMode.FFT:
        if tile is not None and tile != geometry.lanes:
            raise UnsupportedGeometry(f"FFT tile {tile} must equal lanes={geometry.lanes}")
        _build_fft(grid, direction, post_scale)
    else:
        if scan_op is not FuOpKind.ADD:
            raise IllegalSelection(f"scan modes support ADD only, got {scan_op.value}")
        (_build_hs_scan if mode is PcuMode.HS_SCAN else _build_b_scan)(grid)
    return grid.done(mode)


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

def _link_legal(mode: PcuMode, s: int, ln: Link, lanes: int) -> bool:
    if ln.src_lane == ln.dst_lane:
        return True
    if ln.from_input:
        return mode is PcuMode.SYSTOLIC
    half = 1 << (s - 1)
    lg = ilog2(lanes)
    if mode is PcuMode.REDUCTION:
        return s <= lg and ln.dst_lane % (2 * half) == 0 and ln.src_lane == ln.dst_lane + half
    if mode is PcuMode.FFT:
        return s <= lg and ln.src_lane == ln.dst_lane ^ half
    if mode is PcuMode.HS_SCAN:
        return s <= lg and ln.src_lane == ln.dst_lane - half
    if mode is PcuMode.B_SCAN:
        return is_pow2(abs(ln.src_lane - ln.dst_lane))
    return False


def validate_config(config: PcuConfig) -> list[Violation]:
    g = config.geometry
    out: list[Violation] = []
    if g.lanes < 1 or g.stages < 1:
        return [Violation(0, -1, "UnsupportedGeometry")]
    if not is_pow2(g.lanes):
        out.append(Violation(0, -1, "NonPowerOfTwoLanes"))
    elif g.stages < min_stages(config.mode, g.lanes):
        out.append(Violation(0, -1, "StageCountTooSmall"))
    if config.input_perm and (len(config.input_perm) != g.lanes
                              or any(not -1 <= p < g.lanes for p in config.input_perm)):
        out.append(Violation(0, -1, "BadInputPerm"))
    if len(config.fu) != g.stages or any(len(r) != g.lanes for r in config.fu):
        out.append(Violation(0, -1, "FuGridShape"))
    else:
        for s, row in enumerate(config.fu, start=1):
            for j, fu in enumerate(row):
                if fu.problems():
                    out.append(Violation(s, j, "IllegalSelection", detail="; ".join(fu.problems())))
                if fu.op is FuOpKind.MAC and config.mode not in MAC_MODES:
                    out.append(Violation(s, j, "IllegalOp", detail=f"MAC in {config.mode.value}"))
    if len(config.links) > g.stages:
        out.append(Violation(0, -1, "TooManyBoundaries"))
    pow2_lanes = is_pow2(g.lanes)
    for s, links in enumerate(config.links, start=1):
        seen: dict[tuple, int] = {}
        for ln in links:
            if not (0 <= ln.src_lane < g.lanes and 0 <= ln.dst_lane < g.lanes):
                out.append(Violation(s, ln.dst_lane, "LaneOutOfRange", ln.port.value,
                                     f"{ln.src_lane}->{ln.dst_lane}"))
                continue
            if ln.port is Port.CONST:
                out.append(Violation(s, ln.dst_lane, "IllegalPort", ln.port.value))
                continue
            key = (ln.dst_lane, ln.port)
            seen[key] = seen.get(key, 0) + 1
            if seen[key] == 2:
                out.append(Violation(s, ln.dst_lane, "FanInConflict", ln.port.value))
            if pow2_lanes and not _link_legal(config.mode, s, ln, g.lanes):
                out.append(Violation(s, ln.dst_lane, "IllegalLink", ln.port.value,
                                     f"{ln.src_lane}->{ln.dst_lane} in {config.mode.value}"))
    return sorted(out)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalResult:
    frames: np.ndarray
    cycles: int


_OPS = {FuOpKind.ADD: 0, FuOpKind.MUL: 1, FuOpKind.MAC: 2, FuOpKind.PASS: 3}


@functools.lru_cache(maxsize=256)
def _compile(config: PcuConfig):
    """Per stage: gather indices for 3 ports and per-lane op/select codes."""
    viol = validate_config(config)
    if viol:
        raise ConfigInvalid(viol)
    g = config.geometry
    L = g.lanes
    zero = 2 * L  # gather source layout: [prev | raw input | 0]
    stages = []
    for s in range(g.stages):
        src = np.full((3, L), zero, dtype=np.intp)
        for ln in (config.links[s] if s < len(config.links) else ()):
            src[_PORT_INDEX[ln.port], ln.dst_lane] = ln.src_lane + (L if ln.from_input else 0)
        row = config.fu[s]
        op = np.array([_OPS[f.op] for f in row])
        sel0 = np.array([_PORT_INDEX[f.input_select[0]] for f in row])
        sel1 = np.array([_PORT_INDEX[f.input_select[1]] for f in row])
        acc = np.array([_PORT_INDEX[f.accumulate] for f in row])
        const = [f.constant for f in row]
        stages.append((src, op, sel0, sel1, acc, const))
    perm = np.array(config.input_perm if config.input_perm else range(L), dtype=np.intp)
    return perm, stages


def _const_dtype(config: PcuConfig, in_dtype):
    consts = [f.constant for row in config.fu for f in row]
    if any(isinstance(c, complex) and c.imag != 0 for c in consts) or config.mode is PcuMode.FFT:
        return np.result_type(in_dtype, np.complex64)
    if any(isinstance(c, (float, complex)) and not float(np.real(c)).is_integer() for c in consts):
        return np.result_type(in_dtype, np.float32)
    return in_dtype


def pcu_eval(config: PcuConfig, frames) -> EvalResult:
    """Run a stream of frames (shape ``(n, lanes)``) through the PCU."""
    X = np.asarray(frames)
    if X.ndim == 1:
        X = X[None, :]
    L = config.geometry.lanes
    if X.ndim != 2 or X.shape[1] != L:
        raise WidthMismatch(f"frames of width {X.shape[-1]} do not match lanes={L}")
    perm, stages = _compile(config)
    dtype = _const_dtype(config, X.dtype)
    X = X.astype(dtype, copy=False)
    n = X.shape[0]
    zero_col = np.zeros((n, 1), dtype=dtype)
    padded_in = np.concatenate([X, zero_col], axis=1)
    prev = padded_in[:, np.where(perm < 0, L, perm)]
    lanes = np.arange(L)
    for src, op, sel0, sel1, acc, const in stages:
        pool = np.concatenate([prev, X, zero_col], axis=1)
        ports = np.empty((n, 4, L), dtype=dtype)
        ports[:, :3, :] = pool[:, src]
        ports[:, 3, :] = np.asarray(const).astype(dtype)
        a = ports[:, sel0, lanes]
        b = ports[:, sel1, lanes]
        c = ports[:, acc, lanes]
        prev = np.select([op == 0, op == 1, op == 2], [a + b, a * b, c + a * b], default=a)
    cycles = n + config.geometry.stages - 1 if n else 0
    return EvalResult(prev, cycles)


# --------------------------------------------------------------------------
# interconnect accounting
# --------------------------------------------------------------------------

def _link_set(cfg: PcuConfig) -> set:
    return {(b, ln.src_lane, ln.dst_lane, ln.port, ln.from_input)
            for b, links in enumerate(cfg.links, start=1) for ln in links}


def _mux_extra(link_sets: Iterable[set]) -> int:
    """Sum over FU input ports of (distinct sources - 1)."""
    sources: dict[tuple, set] = {}
    for ls in link_sets:
        for b, src, dst, port, fi in ls:
            sources.setdefault((b, dst, port), set()).add((src, fi))
    return sum(len(v) - 1 for v in sources.values())


def interconnect_delta(mode: PcuMode, geometry: PcuGeometry) -> dict:
    """Wiring a mode adds over the baseline PCU.

    added_links counts links absent from the ELEMENTWISE configuration.
    added_mux_inputs counts extra FU input-mux legs needed to also support
    ``mode`` on a PCU that already supports all baseline modes.
    """
    mode_links = _link_set(build_mode_config(mode, geometry))
    ew = _link_set(build_mode_config(PcuMode.ELEMENTWISE, geometry))
    base = [_link_set(build_mode_config(m, geometry)) for m in BASELINE_MODES
            if geometry.stages >= min_stages(m, geometry.lanes)]
    return {
        "added_links": len(mode_links - ew),
        "added_mux_inputs": _mux_extra(base + [mode_links]) - _mux_extra(base),
    }


def dump_config(config: PcuConfig) -> str:
    g = config.geometry
    lines = [f"PCU {g} mode={config.mode.value}"]
    if config.input_perm:
        lines.append("input_perm " + " ".join(str(p) for p in config.input_perm))

    def fmt(c):
        c = complex(c)
        if c.imag == 0:
            return f"{c.real:.6g}"
        return f"({c.real:.6g}{c.imag:+.6g}j)"

    for s in range(1, g.stages + 1):
        lines.append(f"stage {s}")
        for j in range(g.lanes):
            f = config.fu_at(s, j)
            if f == PASS:
                continue
            sel = ",".join(p.value for p in f.input_select)
            extra = f" acc={f.accumulate.value}" if f.op is FuOpKind.MAC else ""
            lines.append(f"  fu[{j}] {f.op.value}({sel}) const={fmt(f.constant)}{extra}")
        for ln in sorted(config.links[s - 1] if s <= len(config.links) else (),
                         key=lambda x: (x.dst_lane, x.port.value, x.src_lane)):
            if ln.src_lane == ln.dst_lane and ln.port is Port.STAGE_IN and not ln.from_input:
                continue
            tag = " input" if ln.from_input else ""
            lines.append(f"  link {ln.src_lane}->{ln.dst_lane} {ln.port.value}{tag}")
    return "\n".join(lines) + "\n"
