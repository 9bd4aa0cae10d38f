"""
Analytical latency model.

Dataflow (RDU): each configuration runs as one pipeline, so its time is the
larger of the slowest kernel stage and the DRAM time of the tensors that
enter or leave the configuration. Pipeline fill is ignored.

Kernel-by-kernel (GPU or RDU used sequentially): every kernel is a roofline
max(flops / peak, bytes / bandwidth) and kernel times add. On a GPU only a
fraction of each kernel's tensor traffic is assumed to reach DRAM (the rest
hits in cache), and long vector FFTs stream their data once per radix pass.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Union

from .config import ChipSpec, GpuSpec
from .errors import PlanChipMismatch, UnsupportedMode, ZeroTime
from .fabric import PcuMode
from .kernels import FLOPS_PER_MAC, Fft, FftVariant, Gemm, work_count
from .mapper import ConfigurationPlan, kernel_throughput, select_mode
from .workloads import DataflowGraph, KernelDesc

CSV_COLUMNS = ("design", "seqlen", "kernel_id", "kind", "flops", "bytes", "time_us", "bottleneck")


class Bottleneck(enum.Enum):
    COMPUTE = "COMPUTE"
    MEMORY = "MEMORY"


@dataclass(frozen=True)
class KernelReport:
    kernel_id: str
    kind: str
    flops: float
    bytes_moved: float
    compute_s: float
    memory_s: float
    time_s: float
    bottleneck: Bottleneck
    config_index: int = 0
    # latency attributed to this kernel when kernels overlap (dataflow)
    share_s: float = 0.0


@dataclass(frozen=True)
class ConfigReport:
    index: int
    compute_s: float
    memory_s: float
    time_s: float
    bottleneck: Bottleneck


@dataclass(frozen=True)
class PerfReport:
    design: str
    seqlen: int
    execution: str  # "dataflow" | "kernel-by-kernel"
    device: str
    kernels: tuple
    configs: tuple
    total_time_s: float
    calibration: dict = field(default_factory=dict)

    @property
    def total_flops(self) -> float:
        return sum(k.flops for k in self.kernels)

    def kernel(self, kid: str) -> KernelReport:
        for k in self.kernels:
            if k.kernel_id == kid:
                return k
        raise KeyError(kid)

    def time_by_kind(self) -> dict:
        out: dict[str, float] = {}
        for k in self.kernels:
            out[k.kind] = out.get(k.kind, 0.0) + k.share_s
        return dict(sorted(out.items()))

    def flops_by_kind(self) -> dict:
        out: dict[str, float] = {}
        for k in self.kernels:
            out[k.kind] = out.get(k.kind, 0.0) + k.flops
        return dict(sorted(out.items()))

    def share(self, kernel_ids) -> float:
        ids = set(kernel_ids)
        return sum(k.share_s for k in self.kernels if k.kernel_id in ids) / self.total_time_s

    def summary(self) -> dict:
        return {
            "design": self.design,
            "seqlen": self.seqlen,
            "execution": self.execution,
            "device": self.device,
            "total_time_s": self.total_time_s,
            "total_flops": self.total_flops,
            "configurations": len(self.configs),
            "time_by_kind_s": self.time_by_kind(),
            "flops_by_kind": self.flops_by_kind(),
            "calibration": self.calibration,
        }


def _label(t_compute: float, t_memory: float) -> Bottleneck:
    return Bottleneck.MEMORY if t_memory > t_compute else Bottleneck.COMPUTE


# --------------------------------------------------------------------------
# peaks
# --------------------------------------------------------------------------

def peak_flops(chip: ChipSpec, mode: PcuMode = PcuMode.SYSTOLIC) -> float:
    """Datapath peak: every FU retiring one multiply-add per cycle.

    All modes share the same FU population, so the peak is mode-independent;
    the mode only has to be supported by the chip.
    """
    if mode not in chip.supported_modes:
        raise UnsupportedMode(f"{mode.value} not supported by {chip.name}")
    return chip.num_pcus * chip.lanes * chip.stages * FLOPS_PER_MAC * chip.freq_hz


def gpu_peak_for(kernel, dev: GpuSpec) -> float:
    kind = getattr(kernel, "kind", kernel)
    if isinstance(kind, Gemm) or (isinstance(kind, Fft) and kind.plan.variant is FftVariant.GEMM):
        return dev.gemm_flops_per_s
    return dev.vector_flops_per_s


# --------------------------------------------------------------------------
# dataflow
# --------------------------------------------------------------------------

def _check_plan(plan: ConfigurationPlan, chip: ChipSpec):
    if plan.chip_name and plan.chip_name != chip.name:
        raise PlanChipMismatch(f"plan was made for {plan.chip_name}, not {chip.name}")
    for c in plan.configs:
        if c.plan.total_pcus > chip.num_pcus:
            raise PlanChipMismatch(f"plan uses {c.plan.total_pcus} PCUs, chip has {chip.num_pcus}")
        for a in c.plan.kernels:
            if a.mode not in chip.supported_modes:
                raise PlanChipMismatch(f"{a.kernel_id} mapped to unsupported {a.mode.value}")


def estimate_dataflow(plan: ConfigurationPlan, chip: ChipSpec, design: str = "",
                      seqlen: int = 0) -> PerfReport:
    _check_plan(plan, chip)
    kernels, configs = [], []
    for idx, cfg in enumerate(plan.configs):
        g = cfg.graph
        ext_in = {t.name for t in g.external_inputs}
        ext_out = {t.name for t in g.external_outputs}
        dram_bytes = sum(t.nbytes for t in g.external_inputs) + sum(t.nbytes for t in g.external_outputs)
        memory_s = dram_bytes / chip.dram_bytes_per_s
        compute_s = cfg.plan.bottleneck_time_s
        time_s = max(compute_s, memory_s)
        configs.append(ConfigReport(idx, compute_s, memory_s, time_s, _label(compute_s, memory_s)))
        # overlapping kernels share the configuration time in proportion to PCU-cycles
        pcu_cycles = {a.kernel_id: a.work / a.pcu_rate for a in cfg.plan.kernels}
        total_cycles = sum(pcu_cycles.values()) or 1.0
        for k in g.kernels:
            a = cfg.plan.alloc(k.id)
            own = sum(t.nbytes for t in k.inputs if t.name in ext_in)
            own += sum(t.nbytes for t in k.outputs if t.name in ext_out)
            kernels.append(KernelReport(
                k.id, k.kind_name, work_count(k).real_flops, float(own),
                a.time_s, memory_s, max(a.time_s, memory_s), _label(a.time_s, memory_s),
                idx, time_s * pcu_cycles[k.id] / total_cycles,
            ))
    return PerfReport(design, seqlen, "dataflow", chip.name, tuple(kernels), tuple(configs),
                      sum(c.time_s for c in configs), chip.calibration())


# --------------------------------------------------------------------------
# kernel-by-kernel
# --------------------------------------------------------------------------

def _kernel_bytes(k: KernelDesc, fraction: float) -> float:
    return fraction * sum(t.nbytes for t in (*k.inputs, *k.outputs))


def estimate_kernel_by_kernel(g: DataflowGraph, dev: Union[GpuSpec, ChipSpec], design: str = "",
                              seqlen: int = 0) -> PerfReport:
    kernels = []
    for k in g.kernels:
        w = work_count(k)
        if isinstance(dev, GpuSpec):
            compute_s = w.real_flops / gpu_peak_for(k, dev)
            bytes_moved = _kernel_bytes(k, dev.dram_traffic_fraction)
            if (dev.multipass_vector_fft and isinstance(k.kind, Fft)
                    and k.kind.plan.variant is FftVariant.VECTOR):
                # each extra radix pass writes and re-reads the complex working set
                work_set = max(t.nbytes for t in (*k.inputs, *k.outputs))
                bytes_moved += (k.kind.plan.passes - 1) * 2 * work_set
        else:
            mode = select_mode(k, dev)
            compute_s = w.normalized_units / kernel_throughput(k, mode, dev.num_pcus, dev)
            bytes_moved = _kernel_bytes(k, 1.0)
        memory_s = bytes_moved / dev.dram_bytes_per_s
        t = max(compute_s, memory_s)
        kernels.append(KernelReport(k.id, k.kind_name, w.real_flops, bytes_moved,
                                    compute_s, memory_s, t, _label(compute_s, memory_s), 0, t))
    total = sum(k.time_s for k in kernels)
    cfg = ConfigReport(0, sum(k.compute_s for k in kernels), sum(k.memory_s for k in kernels),
                       total, _label(sum(k.compute_s for k in kernels), sum(k.memory_s for k in kernels)))
    return PerfReport(design, seqlen, "kernel-by-kernel", dev.name, tuple(kernels), (cfg,),
                      total, dev.calibration())


# --------------------------------------------------------------------------
# comparison and export
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Speedup:
    total: float
    by_kind: dict

    def __float__(self):
        return self.total


def compare(a: PerfReport, b: PerfReport) -> Speedup:
    """How many times faster ``b`` is than ``a`` (a_time / b_time)."""
    if a.total_time_s <= 0 or b.total_time_s <= 0:
        raise ZeroTime(f"cannot compare {a.design!r} and {b.design!r}: zero total time")
    ta, tb = a.time_by_kind(), b.time_by_kind()
    groups = {k: ta[k] / tb[k] for k in sorted(set(ta) & set(tb)) if tb[k] > 0}
    return Speedup(a.total_time_s / b.total_time_s, groups)


def _sci(x: float) -> str:
    return f"{x:.5e}"


def report_rows(reports) -> list[list[str]]:
    rows = []
    for r in reports:
        for k in r.kernels:
            rows.append([r.design, str(r.seqlen), k.kernel_id, k.kind, _sci(k.flops),
                         _sci(k.bytes_moved), _sci(k.time_s * 1e6), k.bottleneck.value])
    rows.sort(key=lambda row: (row[0], int(row[1]), row[2]))
    return rows


def to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(report_rows(reports))
    return buf.getvalue()


def to_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"
