"""Chip and device descriptions and their JSON config files.

Units are explicit in file field names (``freq_ghz``, ``pmu_mib``, ``dram_gbps``,
``*_tflops``). Loaders accept a path or the name of a shipped default
(``rdu_table1``, ``gpu_a100``, ``vga``).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import ConfigParseError, InvariantViolation
from .fabric import BASELINE_MODES, PcuGeometry, PcuMode
from .kernels import is_pow2

MIB = 1 << 20


@dataclass(frozen=True)
class ChipSpec:
    name: str
    num_pcus: int
    geometry: PcuGeometry
    freq_hz: float
    num_pmus: int
    pmu_bytes: int
    dram_bytes_per_s: float
    supported_modes: frozenset = frozenset(BASELINE_MODES)
    # calibration knobs (see README); None means "derive from geometry"
    degraded_utilization: Optional[float] = None
    pmu_words_per_cycle: Optional[float] = None
    complex_lane_packing: int = 2
    fft_stages_per_level: int = 3
    recurrence_latency_cycles: float = 64.0

    @property
    def lanes(self) -> int:
        return self.geometry.lanes

    @property
    def stages(self) -> int:
        return self.geometry.stages

    @property
    def degraded(self) -> float:
        return 1.0 / self.stages if self.degraded_utilization is None else self.degraded_utilization

    @property
    def pmu_words(self) -> float:
        return float(self.lanes) if self.pmu_words_per_cycle is None else self.pmu_words_per_cycle

    @property
    def pmu_capacity(self) -> int:
        return self.num_pmus * self.pmu_bytes

    def with_modes(self, *modes: PcuMode, name: Optional[str] = None) -> "ChipSpec":
        return dataclasses.replace(self, supported_modes=self.supported_modes | frozenset(modes),
                                   name=name or self.name)

    def but(self, **changes) -> "ChipSpec":
        return dataclasses.replace(self, **changes).check()

    def calibration(self) -> dict:
        return {
            "degraded_utilization": self.degraded,
            "pmu_words_per_cycle": self.pmu_words,
            "complex_lane_packing": self.complex_lane_packing,
            "fft_stages_per_level": self.fft_stages_per_level,
            "recurrence_latency_cycles": self.recurrence_latency_cycles,
        }

    def check(self) -> "ChipSpec":
        for rule, ok in (
            ("num_pcus >= 1", self.num_pcus >= 1),
            ("lanes >= 1", self.lanes >= 1),
            ("stages >= 1", self.stages >= 1),
            ("lanes is a power of two", is_pow2(self.lanes)),
            ("freq_hz > 0", self.freq_hz > 0),
            ("num_pmus >= 1", self.num_pmus >= 1),
            ("pmu_bytes > 0", self.pmu_bytes > 0),
            ("dram_bytes_per_s > 0", self.dram_bytes_per_s > 0),
            ("supported_modes include the baseline modes", set(BASELINE_MODES) <= set(self.supported_modes)),
            ("degraded_utilization in (0, 1]", self.degraded_utilization is None or 0 < self.degraded_utilization <= 1),
            ("pmu_words_per_cycle > 0", self.pmu_words_per_cycle is None or self.pmu_words_per_cycle > 0),
            ("complex_lane_packing in {1, 2}", self.complex_lane_packing in (1, 2)),
            ("fft_stages_per_level >= 1", self.fft_stages_per_level >= 1),
            ("recurrence_latency_cycles > 0", self.recurrence_latency_cycles > 0),
        ):
            if not ok:
                raise InvariantViolation(rule, self.name)
        return self


@dataclass(frozen=True)
class GpuSpec:
    name: str
    gemm_flops_per_s: float
    vector_flops_per_s: float
    dram_bytes_per_s: float
    # share of each kernel's logical tensor bytes that reach DRAM (cache reuse)
    dram_traffic_fraction: float = 1.0
    # vector FFTs longer than one tile stream the data once per radix pass
    multipass_vector_fft: bool = False

    def calibration(self) -> dict:
        return {
            "dram_traffic_fraction": self.dram_traffic_fraction,
            "multipass_vector_fft": self.multipass_vector_fft,
        }

    def check(self) -> "GpuSpec":
        for rule, ok in (
            ("vector_flops_per_s > 0", self.vector_flops_per_s > 0),
            ("gemm_flops_per_s >= vector_flops_per_s", self.gemm_flops_per_s >= self.vector_flops_per_s),
            ("dram_bytes_per_s > 0", self.dram_bytes_per_s > 0),
            ("dram_traffic_fraction in [0, 1]", 0 <= self.dram_traffic_fraction <= 1),
        ):
            if not ok:
                raise InvariantViolation(rule, self.name)
        return self


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

def _read(path_or_name) -> tuple[str, dict]:
    p = Path(path_or_name)
    if p.is_file():
        text, name = p.read_text(), p.stem
    else:
        res = resources.files("rdusim") / "data" / f"{path_or_name}.json"
        if not res.is_file():
            raise ConfigParseError(str(path_or_name), "no such file or built-in config")
        text, name = res.read_text(), str(path_or_name)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParseError(str(path_or_name), f"invalid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ConfigParseError(str(path_or_name), "top level must be an object")
    return data.get("name", name), data


def _num(data: dict, key: str, prefix: str = "", kind=float, required=True, default=None):
    path = f"{prefix}{key}"
    if key not in data:
        if required:
            raise ConfigParseError(path, "missing required field")
        return default
    v = data[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigParseError(path, f"expected a number, got {v!r}")
    if kind is int:
        if float(v) != int(v):
            raise ConfigParseError(path, f"expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _no_extra(data: dict, allowed: set, prefix: str = ""):
    for k in sorted(set(data) - allowed):
        raise ConfigParseError(f"{prefix}{k}", "unknown field")


_CHIP_FIELDS = {"name", "num_pcus", "lanes", "stages", "freq_ghz", "num_pmus", "pmu_mib",
                "dram_gbps", "supported_modes", "calibration"}
_CHIP_CAL = {"degraded_utilization", "pmu_words_per_cycle", "complex_lane_packing", "fft_stages_per_level",
             "recurrence_latency_cycles"}
_GPU_FIELDS = {"name", "gemm_tflops", "vector_tflops", "dram_gbps", "calibration"}
_GPU_CAL = {"dram_traffic_fraction", "multipass_vector_fft"}


def chip_from_dict(data: dict, name: str = "chip") -> ChipSpec:
    _no_extra(data, _CHIP_FIELDS)
    modes_raw = data.get("supported_modes", [m.value for m in BASELINE_MODES])
    if not isinstance(modes_raw, list):
        raise ConfigParseError("supported_modes", "expected a list of mode names")
    modes = set()
    for i, m in enumerate(modes_raw):
        try:
            modes.add(PcuMode(str(m).upper()))
        except ValueError:
            raise ConfigParseError(f"supported_modes[{i}]", f"unknown mode {m!r}") from None
    cal = data.get("calibration", {})
    if not isinstance(cal, dict):
        raise ConfigParseError("calibration", "expected an object")
    _no_extra(cal, _CHIP_CAL, "calibration.")
    c = "calibration."
    spec = ChipSpec(
        name=str(data.get("name", name)),
        num_pcus=_num(data, "num_pcus", kind=int),
        geometry=PcuGeometry(_num(data, "lanes", kind=int), _num(data, "stages", kind=int)),
        freq_hz=_num(data, "freq_ghz") * 1e9,
        num_pmus=_num(data, "num_pmus", kind=int),
        pmu_bytes=int(round(_num(data, "pmu_mib") * MIB)),
        dram_bytes_per_s=_num(data, "dram_gbps") * 1e9,
        supported_modes=frozenset(modes | set(BASELINE_MODES)),
        degraded_utilization=_num(cal, "degraded_utilization", c, required=False),
        pmu_words_per_cycle=_num(cal, "pmu_words_per_cycle", c, required=False),
        complex_lane_packing=_num(cal, "complex_lane_packing", c, int, False, 2),
        fft_stages_per_level=_num(cal, "fft_stages_per_level", c, int, False, 3),
        recurrence_latency_cycles=_num(cal, "recurrence_latency_cycles", c, float, False, 64.0),
    )
    return spec.check()


def gpu_from_dict(data: dict, name: str = "device") -> GpuSpec:
    _no_extra(data, _GPU_FIELDS)
    cal = data.get("calibration", {})
    if not isinstance(cal, dict):
        raise ConfigParseError("calibration", "expected an object")
    _no_extra(cal, _GPU_CAL, "calibration.")
    multipass = cal.get("multipass_vector_fft", False)
    if not isinstance(multipass, bool):
        raise ConfigParseError("calibration.multipass_vector_fft", "expected true or false")
    spec = GpuSpec(
        name=str(data.get("name", name)),
        gemm_flops_per_s=_num(data, "gemm_tflops") * 1e12,
        vector_flops_per_s=_num(data, "vector_tflops") * 1e12,
        dram_bytes_per_s=_num(data, "dram_gbps") * 1e9,
        dram_traffic_fraction=_num(cal, "dram_traffic_fraction", "calibration.",
                                        required=False, default=1.0),
        multipass_vector_fft=multipass,
    )
    return spec.check()


def load_chip_config(path_or_name="rdu_table1") -> ChipSpec:
    name, data = _read(path_or_name)
    return chip_from_dict(data, name)


def load_device_config(path_or_name="gpu_a100") -> GpuSpec:
    name, data = _read(path_or_name)
    return gpu_from_dict(data, name)
