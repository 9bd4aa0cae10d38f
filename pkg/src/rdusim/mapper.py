"""
Spatial mapping of a dataflow graph onto an RDU chip.

Every kernel gets a PCU mode and an integer PCU count. The allocator
maximises the pipeline rate min_i(throughput_i / work_i) by integer
water-filling: each kernel starts on one PCU and the next PCU always goes to
the current bottleneck (lowest kernel index on ties). This is optimal for the
single-configuration objective because every kernel's throughput is
non-decreasing in its PCU count. Graphs that do not fit are split greedily in
topological order into sequential configurations whose cut edges are staged
through DRAM.

Per-PCU rates, in the kernel's normalized work units per cycle:

  GEMM, SYSTOLIC                 lanes * stages MACs
  GEMM-variant FFT, SYSTOLIC     lanes * stages / 4 (one complex MAC = 4 real)
  vector FFT, FFT mode           (lanes / packing) * log2(lanes) / ceil(log2(lanes) * stages_per_level / stages)
  HS / B scan, scan mode         lanes elements
  vector FFT or parallel scan    min(lanes * degraded_utilization, pmu_words / words_per_unit)
    on a baseline PCU
  C-scan                         min(channels, lanes * n) / recurrence_latency per kernel
  ELEMENTWISE                    lanes / ceil(ops_per_element / stages) elements
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional

from .config import ChipSpec
from .errors import IllegalModeForKernel, Infeasible, KernelTooLarge
from .fabric import PcuMode
from .kernels import (
    REAL_MACS_PER_COMPLEX_MAC,
    Elementwise,
    Fft,
    FftVariant,
    Gemm,
    Scan,
    ScanVariant,
    ilog2,
    work_count,
)
from .workloads import DataflowGraph, Edge, KernelDesc, TensorDesc, topological_order

# words moved through PMUs per normalized unit when a baseline PCU emulates a level
FFT_WORDS_PER_UNIT = 2  # complex value
SCAN_WORDS_PER_UNIT = 1
# endpoint name for buffers that stream to or from DRAM
DRAM = "dram"


def legal_modes(kernel) -> tuple[PcuMode, ...]:
    kind = getattr(kernel, "kind", kernel)
    if isinstance(kind, Gemm):
        return (PcuMode.SYSTOLIC,)
    if isinstance(kind, Fft):
        if kind.plan.variant is FftVariant.GEMM:
            return (PcuMode.SYSTOLIC,)
        return (PcuMode.FFT, PcuMode.ELEMENTWISE)
    if isinstance(kind, Scan):
        v = kind.desc.variant
        if v is ScanVariant.C_SCAN:
            return (PcuMode.ELEMENTWISE,)
        if v is ScanVariant.HS_SCAN:
            return (PcuMode.HS_SCAN, PcuMode.ELEMENTWISE)
        if v is ScanVariant.B_SCAN:
            return (PcuMode.B_SCAN, PcuMode.ELEMENTWISE)
        return (PcuMode.B_SCAN, PcuMode.HS_SCAN, PcuMode.ELEMENTWISE)
    return (PcuMode.ELEMENTWISE,)


def _units_per_element(kind: Scan) -> float:
    return work_count(kind).normalized_units / (kind.desc.length * kind.channels)


def pcu_rate(kernel, mode: PcuMode, chip: ChipSpec) -> float:
    """Work units per cycle for one PCU (C-scan: per PCU before the channel cap)."""
    kind = getattr(kernel, "kind", kernel)
    if mode not in legal_modes(kind):
        raise IllegalModeForKernel(f"{kind.name} cannot run in {mode.value}")
    lanes, stages = chip.lanes, chip.stages
    if isinstance(kind, Gemm):
        return float(lanes * stages)
    if isinstance(kind, Fft):
        if mode is PcuMode.SYSTOLIC:
            return lanes * stages / REAL_MACS_PER_COMPLEX_MAC
        if mode is PcuMode.FFT:
            levels = ilog2(lanes)
            passes = math.ceil(levels * chip.fft_stages_per_level / stages)
            return (lanes / chip.complex_lane_packing) * levels / passes
        return min(lanes * chip.degraded, chip.pmu_words / FFT_WORDS_PER_UNIT)
    if isinstance(kind, Scan):
        if kind.desc.variant is ScanVariant.C_SCAN:
            return lanes / chip.recurrence_latency_cycles
        if mode in (PcuMode.HS_SCAN, PcuMode.B_SCAN):
            return lanes * _units_per_element(kind)
        return min(lanes * chip.degraded, chip.pmu_words / SCAN_WORDS_PER_UNIT)
    if isinstance(kind, Elementwise):
        return lanes / max(1, math.ceil(kind.ops_per_element / stages))
    raise IllegalModeForKernel(f"unknown kernel kind {kind!r}")


def kernel_throughput(kernel, mode: PcuMode, n_pcus: int, chip: ChipSpec) -> float:
    """Work units per second of ``kernel`` on ``n_pcus`` PCUs in ``mode``."""
    if mode not in chip.supported_modes:
        raise IllegalModeForKernel(f"{mode.value} is not supported by chip {chip.name}")
    kind = getattr(kernel, "kind", kernel)
    rate = pcu_rate(kind, mode, chip) * n_pcus
    if isinstance(kind, Scan) and kind.desc.variant is ScanVariant.C_SCAN:
        rate = min(rate, kind.channels / chip.recurrence_latency_cycles)
    return rate * chip.freq_hz


def select_mode(kernel, chip: ChipSpec) -> PcuMode:
    """Fastest legal mode the chip supports (earlier in legal_modes wins ties)."""
    best, best_rate = None, -1.0
    for m in legal_modes(kernel):
        if m in chip.supported_modes:
            r = pcu_rate(kernel, m, chip)
            if r > best_rate:
                best, best_rate = m, r
    if best is None:
        raise IllegalModeForKernel(f"no supported mode for {getattr(kernel, 'id', kernel)}")
    return best


# --------------------------------------------------------------------------
# plans
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelAlloc:
    kernel_id: str
    pcus: int
    mode: PcuMode
    pcu_rate: float  # units/cycle for one PCU
    throughput: float  # units/s at the allocated count
    work: float

    @property
    def time_s(self) -> float:
        return self.work / self.throughput


@dataclass(frozen=True)
class EdgeBuffer:
    producer: str
    consumer: str
    tensor: str
    nbytes: int


@dataclass(frozen=True)
class AllocationPlan:
    kernels: tuple
    buffers: tuple

    @property
    def total_pcus(self) -> int:
        return sum(k.pcus for k in self.kernels)

    @property
    def buffer_bytes(self) -> int:
        return sum(b.nbytes for b in self.buffers)

    @property
    def bottleneck_time_s(self) -> float:
        return max((k.time_s for k in self.kernels), default=0.0)

    def alloc(self, kid: str) -> KernelAlloc:
        for k in self.kernels:
            if k.kernel_id == kid:
                return k
        raise KeyError(kid)

    def to_dict(self) -> dict:
        return {
            "kernels": [{"id": k.kernel_id, "pcus": k.pcus, "mode": k.mode.value,
                         "rate_units_per_cycle": k.pcu_rate, "time_s": k.time_s}
                        for k in self.kernels],
            "buffers": [{"producer": b.producer, "consumer": b.consumer,
                         "tensor": b.tensor, "bytes": b.nbytes} for b in self.buffers],
        }


@dataclass(frozen=True)
class Configuration:
    graph: DataflowGraph
    plan: AllocationPlan


@dataclass(frozen=True)
class ConfigurationPlan:
    configs: tuple
    staged_edges: tuple  # Edge, crossing a configuration cut
    chip_name: str = ""

    @property
    def staged_bytes(self) -> int:
        return sum(e.tensor.nbytes for e in self.staged_edges)

    def to_dict(self) -> dict:
        return {
            "chip": self.chip_name,
            "configurations": [
                {"kernels": c.graph.kernel_ids, **c.plan.to_dict()} for c in self.configs
            ],
            "dram_staged": [{"producer": e.producer, "consumer": e.consumer,
                             "tensor": e.tensor.name, "bytes": e.tensor.nbytes}
                            for e in self.staged_edges],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# memory
# --------------------------------------------------------------------------

def tile_bytes(t: TensorDesc, lanes: int) -> int:
    rows = min(lanes, t.shape[0])
    return rows * math.prod(t.shape[1:]) * t.element_bytes


def edge_buffers(g: DataflowGraph, chip: ChipSpec, buffering: str = "double") -> tuple:
    if buffering not in ("double", "full"):
        raise ValueError(f"buffering must be 'double' or 'full', got {buffering!r}")
    size = (lambda t: 2 * tile_bytes(t, chip.lanes)) if buffering == "double" else (lambda t: t.nbytes)
    out = [EdgeBuffer(e.producer, e.consumer, e.tensor.name, size(e.tensor)) for e in g.edges]
    # DRAM streams entering or leaving the configuration also land in PMUs
    ext_in = {t.name for t in g.external_inputs}
    ext_out = {t.name for t in g.external_outputs}
    for k in g.kernels:
        out += [EdgeBuffer(DRAM, k.id, t.name, size(t)) for t in k.inputs if t.name in ext_in]
        out += [EdgeBuffer(k.id, DRAM, t.name, size(t)) for t in k.outputs if t.name in ext_out]
    return tuple(out)


@dataclass(frozen=True)
class MemoryViolation:
    rule: str
    needed_pmus: int
    available_pmus: int

    def __str__(self):
        return f"{self.rule}(needs {self.needed_pmus} PMUs, chip has {self.available_pmus})"


def pmus_needed(buffers: Iterable[EdgeBuffer], scratch: Iterable[int], chip: ChipSpec) -> int:
    sizes = [b.nbytes for b in buffers] + [s for s in scratch if s > 0]
    return sum(math.ceil(n / chip.pmu_bytes) for n in sizes)


def check_memory(g: DataflowGraph, plan: Optional[AllocationPlan], chip: ChipSpec,
                 buffering: str = "double") -> list[MemoryViolation]:
    """Buffers are double-buffered tiles unless ``buffering='full'`` forces whole tensors."""
    buffers = plan.buffers if (plan is not None and buffering == "double") else edge_buffers(g, chip, buffering)
    need = pmus_needed(buffers, (k.scratch_bytes for k in g.kernels), chip)
    if need > chip.num_pmus:
        return [MemoryViolation("PmuCapacityExceeded", need, chip.num_pmus)]
    return []


# --------------------------------------------------------------------------
# allocation
# --------------------------------------------------------------------------

def _allocate(works, rates, caps, budget):
    """Integer water-filling. rates[i](n) is units/s on n PCUs."""
    k = len(works)
    n = [1] * k
    saturated = [False] * k
    left = budget - k
    while left > 0:
        best, best_val = -1, math.inf
        for i in range(k):
            if saturated[i]:
                continue
            val = rates[i](n[i]) / works[i] if works[i] > 0 else math.inf
            if val < best_val:
                best, best_val = i, val
        if best < 0:
            break
        if n[best] >= caps[best] or rates[best](n[best] + 1) <= rates[best](n[best]):
            saturated[best] = True
            continue
        n[best] += 1
        left -= 1
    return n


def balance_pipeline(g: DataflowGraph, chip: ChipSpec, buffering: str = "double") -> AllocationPlan:
    ks = g.kernels
    if len(ks) > chip.num_pcus:
        raise Infeasible(f"{len(ks)} kernels need at least {len(ks)} PCUs, chip has {chip.num_pcus}")
    buffers = edge_buffers(g, chip, buffering)
    need = pmus_needed(buffers, (k.scratch_bytes for k in ks), chip)
    if need > chip.num_pmus:
        raise Infeasible(f"edge buffers need {need} PMUs, chip has {chip.num_pmus}")
    modes = [select_mode(k, chip) for k in ks]
    works = [work_count(k).normalized_units for k in ks]
    rates = [(lambda n, k=k, m=m: kernel_throughput(k, m, n, chip)) for k, m in zip(ks, modes)]
    counts = _allocate(works, rates, [chip.num_pcus] * len(ks), chip.num_pcus)
    allocs = tuple(
        KernelAlloc(k.id, n, m, pcu_rate(k, m, chip), kernel_throughput(k, m, n, chip), w)
        for k, n, m, w in zip(ks, counts, modes, works)
    )
    return AllocationPlan(allocs, buffers)


# --------------------------------------------------------------------------
# partitioning
# --------------------------------------------------------------------------

def subgraph(g: DataflowGraph, ids: Iterable[str], name: Optional[str] = None) -> DataflowGraph:
    keep = [k for k in g.kernels if k.id in set(ids)]
    inside = {k.id for k in keep}
    edges = tuple(e for e in g.edges if e.producer in inside and e.consumer in inside)
    produced_inside = {t.name for k in keep for t in k.outputs}
    ext_in: dict[str, TensorDesc] = {}
    for k in keep:
        for t in k.inputs:
            if t.name not in produced_inside:
                ext_in.setdefault(t.name, t)
    graph_outs = {t.name for t in g.external_outputs}
    consumed_outside = {e.tensor.name for e in g.edges if e.producer in inside and e.consumer not in inside}
    ext_out = [t for k in keep for t in k.outputs if t.name in graph_outs | consumed_outside]
    return DataflowGraph(name or g.name, tuple(keep), edges, tuple(ext_in.values()), tuple(ext_out))


def _feasible(g: DataflowGraph, ids: list[str], chip: ChipSpec) -> Optional[AllocationPlan]:
    try:
        return balance_pipeline(subgraph(g, ids), chip)
    except Infeasible:
        return None


def partition_into_configs(g: DataflowGraph, chip: ChipSpec) -> ConfigurationPlan:
    order = topological_order(g)
    if order is None:
        raise Infeasible(f"graph {g.name} has a cycle")
    groups: list[list[str]] = []
    current: list[str] = []
    for kid in order:
        if _feasible(g, current + [kid], chip) is not None:
            current.append(kid)
            continue
        if _feasible(g, [kid], chip) is None:
            raise KernelTooLarge(f"kernel {kid} alone does not fit chip {chip.name}")
        groups.append(current)
        current = [kid]
    if current:
        groups.append(current)
    where = {kid: i for i, grp in enumerate(groups) for kid in grp}
    configs = []
    for i, grp in enumerate(groups):
        sg = subgraph(g, grp, f"{g.name}#{i}")
        configs.append(Configuration(sg, balance_pipeline(sg, chip)))
    staged = tuple(e for e in g.edges if where[e.producer] != where[e.consumer])
    return ConfigurationPlan(tuple(configs), staged, chip.name)
