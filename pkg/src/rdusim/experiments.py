"""Experiment presets: the design matrix behind each reported comparison."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .config import ChipSpec, GpuSpec, load_device_config
from .errors import RduSimError
from .fabric import PcuMode
from .kernels import FftVariant, is_pow2
from .mapper import partition_into_configs
from .perf import PerfReport, compare, estimate_dataflow, estimate_kernel_by_kernel
from .workloads import build_decoder, build_hyena_decoder, graph_flops

DEFAULT_SEQLENS = (1 << 18, 1 << 19, 1 << 20)
PRESETS = ("hyena-designs", "hyena-devices", "mamba-designs", "mamba-devices", "pcu-verify", "work-tables")


class UnknownPreset(RduSimError):
    pass


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    seqlens: tuple = DEFAULT_SEQLENS
    hidden: int = 32
    tile: int = 32

    def check(self) -> "ExperimentPreset":
        if self.name not in PRESETS:
            raise UnknownPreset(f"unknown preset {self.name!r}; choose from {', '.join(PRESETS)}")
        bad = [s for s in self.seqlens if not is_pow2(s)]
        if bad:
            raise ValueError(f"seqlens must be powers of two, got {bad}")
        return self


@dataclass(frozen=True)
class Design:
    label: str
    decoder: str
    target: str  # "rdu", "rdu+fft", "rdu+hs", "rdu+b", "gpu", "vga"


@dataclass(frozen=True)
class SpeedupSpec:
    name: str
    slow: str
    fast: str
    reference: float  # published reference value


HYENA_DESIGNS = (
    Design("attention", "attention", "rdu"),
    Design("vector-base", "hyena-vector", "rdu"),
    Design("gemm-base", "hyena-gemm", "rdu"),
    Design("fft-mode", "hyena-vector", "rdu+fft"),
)
HYENA_SPEEDUPS = (
    SpeedupSpec("vector-base vs attention", "attention", "vector-base", 217.74),
    SpeedupSpec("gemm-base vs vector-base", "vector-base", "gemm-base", 2.61),
    SpeedupSpec("fft-mode vs gemm-base", "gemm-base", "fft-mode", 1.95),
)
HYENA_DEVICES = (
    Design("gpu-gemm", "hyena-gemm", "gpu"),
    Design("gpu-vector", "hyena-vector", "gpu"),
    Design("vga-gemm", "hyena-gemm", "vga"),
    Design("vga-vector", "hyena-vector", "vga"),
    Design("rdu-gemm", "hyena-gemm", "rdu"),
    Design("rdu-vector", "hyena-vector", "rdu+fft"),
)
HYENA_DEVICE_SPEEDUPS = (
    SpeedupSpec("rdu-gemm vs gpu-gemm", "gpu-gemm", "rdu-gemm", 2.0),
    SpeedupSpec("vga-gemm vs gpu-gemm", "gpu-gemm", "vga-gemm", 2.0),
    SpeedupSpec("rdu-vector vs gpu-vector", "gpu-vector", "rdu-vector", 5.95),
    SpeedupSpec("vga-vector vs gpu-vector", "gpu-vector", "vga-vector", 5.95),
)
MAMBA_DESIGNS = (
    Design("attention", "attention", "rdu"),
    Design("c-scan", "mamba-c", "rdu"),
    Design("parallel-base", "mamba-b", "rdu"),
    Design("hs-mode", "mamba-hs", "rdu+hs"),
    Design("b-mode", "mamba-b", "rdu+b"),
)
MAMBA_SPEEDUPS = (
    SpeedupSpec("c-scan vs attention", "attention", "c-scan", 7.34),
    SpeedupSpec("parallel-base vs c-scan", "c-scan", "parallel-base", 562.98),
    SpeedupSpec("b-mode vs parallel-base", "parallel-base", "b-mode", 1.75),
    SpeedupSpec("hs-mode vs parallel-base", "parallel-base", "hs-mode", 1.75),
    SpeedupSpec("hs-mode vs b-mode", "b-mode", "hs-mode", 1.0),
)
MAMBA_DEVICES = (
    Design("gpu", "mamba-b", "gpu"),
    Design("rdu", "mamba-b", "rdu+b"),
)
MAMBA_DEVICE_SPEEDUPS = (SpeedupSpec("rdu vs gpu", "gpu", "rdu", 2.12),)

MATRIX = {
    "hyena-designs": (HYENA_DESIGNS, HYENA_SPEEDUPS),
    "hyena-devices": (HYENA_DEVICES, HYENA_DEVICE_SPEEDUPS),
    "mamba-designs": (MAMBA_DESIGNS, MAMBA_SPEEDUPS),
    "mamba-devices": (MAMBA_DEVICES, MAMBA_DEVICE_SPEEDUPS),
}


@dataclass
class Targets:
    """The devices a preset can map designs onto, all derived from one base chip."""

    chip: ChipSpec
    gpu: Optional[GpuSpec] = None
    vga: Optional[GpuSpec] = None

    def rdu(self, target: str) -> ChipSpec:
        extra = {"rdu": (), "rdu+fft": (PcuMode.FFT,), "rdu+hs": (PcuMode.HS_SCAN,),
                 "rdu+b": (PcuMode.B_SCAN,)}[target]
        return self.chip.with_modes(*extra, name=f"{self.chip.name}{target[3:]}")

    def gpu_like(self, target: str) -> GpuSpec:
        if target == "gpu":
            self.gpu = self.gpu or load_device_config("gpu_a100")
            return self.gpu
        self.vga = self.vga or load_device_config("vga")
        return self.vga


def run_design(design: Design, L: int, d: int, R: int, targets: Targets) -> PerfReport:
    g = build_decoder(design.decoder, L, d, R)
    if design.target.startswith("rdu"):
        chip = targets.rdu(design.target)
        return estimate_dataflow(partition_into_configs(g, chip), chip, design.label, L)
    return estimate_kernel_by_kernel(g, targets.gpu_like(design.target), design.label, L)


def design_plans(preset: ExperimentPreset, targets: Targets, L: int) -> dict:
    designs, _ = MATRIX[preset.name]
    out = {}
    for dsg in designs:
        if dsg.target.startswith("rdu"):
            chip = targets.rdu(dsg.target)
            out[dsg.label] = partition_into_configs(build_decoder(dsg.decoder, L, preset.hidden, preset.tile), chip)
    return out


@dataclass(frozen=True)
class PresetResult:
    reports: tuple
    summary: dict


def run_performance_preset(preset: ExperimentPreset, targets: Targets) -> PresetResult:
    designs, speedups = MATRIX[preset.name]
    reports: list[PerfReport] = []
    totals: dict[str, dict[str, float]] = {}
    rows = []
    for L in preset.seqlens:
        by_label = {}
        for dsg in designs:
            r = run_design(dsg, L, preset.hidden, preset.tile, targets)
            reports.append(r)
            by_label[dsg.label] = r
            totals.setdefault(dsg.label, {})[str(L)] = r.total_time_s
        for sp in speedups:
            s = compare(by_label[sp.slow], by_label[sp.fast])
            rows.append({"name": sp.name, "seqlen": L, "speedup": s.total,
                         "reference": sp.reference, "by_kind": s.by_kind})
    devices = sorted({d.target for d in designs})
    calibration = {}
    for t in devices:
        if t.startswith("rdu"):
            calibration["rdu"] = targets.chip.calibration()
        else:
            dev = targets.gpu_like(t)
            calibration[dev.name] = dev.calibration()
    summary = {
        "preset": preset.name,
        "seqlens": list(preset.seqlens),
        "hidden": preset.hidden,
        "tile": preset.tile,
        "chip": targets.chip.name,
        "calibration": calibration,
        "designs": {d.label: {"decoder": d.decoder, "target": d.target} for d in designs},
        "total_time_s": totals,
        "speedups": rows,
    }
    return PresetResult(tuple(reports), summary)


def work_table(preset: ExperimentPreset) -> PresetResult:
    """FLOP tables plus the GEMM/vector work ratios and their padding sensitivity."""
    rows, ratios = [], []
    d, R = preset.hidden, preset.tile
    for L in preset.seqlens:
        works = {}
        for name in ("attention", "hyena-vector", "hyena-gemm", "mamba-c", "mamba-hs", "mamba-b"):
            g = build_decoder(name, L, d, R)
            gw = graph_flops(g)
            works[name] = gw
            for k in g.kernels:
                w = gw.per_kernel[k.id]
                rows.append([name, str(L), k.id, k.kind_name, f"{w.normalized_units:.5e}", f"{w.real_flops:.5e}"])
        fft_ids = ("fft_u", "fft_k", "ifft")
        core = lambda gw: sum(gw.per_kernel[i].normalized_units for i in fft_ids)
        unpadded = {v: graph_flops(build_hyena_decoder(L, d, R, v, pad=False)) for v in FftVariant}
        ratios.append({
            "seqlen": L,
            "fft_core_units_gemm_over_vector": core(works["hyena-gemm"]) / core(works["hyena-vector"]),
            "decoder_flops_gemm_over_vector": works["hyena-gemm"].total.real_flops / works["hyena-vector"].total.real_flops,
            "decoder_flops_gemm_over_vector_unpadded": (unpadded[FftVariant.GEMM].total.real_flops
                                                        / unpadded[FftVariant.VECTOR].total.real_flops),
            "attention_over_hyena_vector_flops": works["attention"].total.real_flops / works["hyena-vector"].total.real_flops,
        })
    rows.sort(key=lambda r: (r[0], int(r[1]), r[2]))
    summary = {"preset": preset.name, "seqlens": list(preset.seqlens), "hidden": d, "tile": R,
               "ratios": ratios}
    return PresetResult(tuple(rows), summary)


WORK_COLUMNS = ("decoder", "seqlen", "kernel_id", "kind", "units", "flops")


def calibration_window(chip: ChipSpec, L: int = 1 << 20, d: int = 32, R: int = 32,
                       values=None) -> list[dict]:
    """Sweep degraded_utilization and report each speedup the knob moves."""
    values = values or [i / 200 for i in range(10, 41)]
    base = Targets(chip)
    fixed = {lbl: run_design(dsg, L, d, R, base).total_time_s
             for lbl, dsg in (("attention", HYENA_DESIGNS[0]), ("gemm-base", HYENA_DESIGNS[2]),
                              ("c-scan", MAMBA_DESIGNS[1]), ("b-mode", MAMBA_DESIGNS[4]))}
    out = []
    for u in values:
        t = Targets(chip.but(degraded_utilization=u))
        vec = run_design(HYENA_DESIGNS[1], L, d, R, t).total_time_s
        par = run_design(MAMBA_DESIGNS[2], L, d, R, t).total_time_s
        out.append({
            "degraded_utilization": u,
            "vector-base vs attention": fixed["attention"] / vec,
            "gemm-base vs vector-base": vec / fixed["gemm-base"],
            "parallel-base vs c-scan": fixed["c-scan"] / par,
            "b-mode vs parallel-base": par / fixed["b-mode"],
        })
    return out
