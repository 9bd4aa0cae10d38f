import csv
import dataclasses
import io
import json

import pytest

from rdusim import kernels as K
from rdusim import mapper as MP
from rdusim import perf as P
from rdusim.config import GpuSpec, load_device_config
from rdusim.errors import PlanChipMismatch, UnsupportedMode, ZeroTime
from rdusim.fabric import PcuMode
from rdusim.workloads import DECODERS, DataflowGraph, build_decoder

from _support import CHIP, FULL, chain

GPU = load_device_config("gpu_a100")
BARE_GPU = GpuSpec("bare", 311.87e12, 77.97e12, 8e12)


def dataflow(g, chip=CHIP):
    return P.estimate_dataflow(MP.partition_into_configs(g, chip), chip, g.name)


# ---- peaks ------------------------------------------------------------

def test_peak_flops_table_chip():
    assert P.peak_flops(CHIP) == pytest.approx(638.976e12, rel=1e-12)
    assert P.peak_flops(CHIP) / 1e12 == pytest.approx(638.98, rel=1e-3)


def test_peak_flops_unit_chip():
    chip = CHIP.but(num_pcus=1, freq_hz=1.0)
    assert P.peak_flops(chip) == 768


def test_fft_mode_peak_matches_systolic():
    assert P.peak_flops(FULL, PcuMode.FFT) == pytest.approx(P.peak_flops(FULL), rel=0.01)
    with pytest.raises(UnsupportedMode):
        P.peak_flops(CHIP, PcuMode.FFT)


# ---- dataflow ---------------------------------------------------------

def test_full_chip_gemm_takes_one_second():
    macs = 520 * 384 * 1.6e9
    g = chain([K.Gemm(int(macs // 1_600_000), 1600, 1000)])
    r = dataflow(g)
    assert r.total_time_s == pytest.approx(1.0, rel=1e-12)
    assert r.configs[0].bottleneck is P.Bottleneck.COMPUTE


def test_memory_bound_configuration():
    g = chain([K.Elementwise("op", 10, 1)])
    r = dataflow(g, CHIP.but(dram_bytes_per_s=1.0))
    assert r.configs[0].bottleneck is P.Bottleneck.MEMORY
    assert r.total_time_s == sum(t.nbytes for t in (*g.external_inputs, *g.external_outputs))


def test_two_equal_configurations_add():
    one_pcu = CHIP.but(num_pcus=1)
    single = dataflow(chain([K.Gemm(4096, 32, 32)]), one_pcu)
    double = dataflow(chain([K.Gemm(4096, 32, 32)] * 2), one_pcu)
    assert len(double.configs) == 2
    assert double.total_time_s == pytest.approx(2 * single.total_time_s)


def test_plan_chip_mismatch():
    plan = MP.partition_into_configs(build_decoder("hyena-vector", 4096), FULL)
    with pytest.raises(PlanChipMismatch):
        P.estimate_dataflow(plan, CHIP)


def test_shares_sum_to_total():
    r = dataflow(build_decoder("mamba-b", 1 << 18), FULL)
    assert sum(k.share_s for k in r.kernels) == pytest.approx(r.total_time_s)
    assert sum(r.time_by_kind().values()) == pytest.approx(r.total_time_s)


# ---- kernel-by-kernel -------------------------------------------------

def test_gpu_gemm_example():
    g = chain([K.Gemm(10**4, 10**4, 10**4)])
    r = P.estimate_kernel_by_kernel(g, BARE_GPU)
    assert r.kernels[0].flops == 2e12
    assert r.total_time_s * 1e3 == pytest.approx(6.41, abs=0.005)


def test_gpu_fft_example():
    g = chain([K.Fft(K.FftPlan(32, 32), batch=781_250_000)])
    r = P.estimate_kernel_by_kernel(g, GPU)
    assert r.kernels[0].flops == 1e12
    assert r.total_time_s * 1e3 == pytest.approx(12.8, abs=0.05)


def test_zero_kernel_graph():
    empty = DataflowGraph("empty", (), (), (), ())
    assert P.estimate_kernel_by_kernel(empty, GPU).total_time_s == 0
    assert dataflow(empty).total_time_s == 0


def test_kbk_total_is_sum_of_kernels():
    r = P.estimate_kernel_by_kernel(build_decoder("hyena-gemm", 1 << 18), GPU)
    assert r.total_time_s == pytest.approx(sum(k.time_s for k in r.kernels))
    assert r.configs[0].time_s == r.total_time_s


def test_gpu_multipass_adds_traffic_to_long_vector_ffts():
    g = build_decoder("hyena-vector", 1 << 18)
    single = P.estimate_kernel_by_kernel(g, dataclasses.replace(GPU, multipass_vector_fft=False))
    multi = P.estimate_kernel_by_kernel(g, GPU)
    assert multi.kernel("fft_u").bytes_moved > single.kernel("fft_u").bytes_moved
    assert multi.kernel("mlp_up").bytes_moved == single.kernel("mlp_up").bytes_moved


# ---- compare ----------------------------------------------------------

def _report(t):
    k = P.KernelReport("k", "GEMM", 1.0, 0.0, t, 0.0, t, P.Bottleneck.COMPUTE, 0, t)
    return P.PerfReport("x", 1, "dataflow", "d", (k,), (), t)


def test_compare_examples():
    assert P.compare(_report(10e-3), _report(5e-3)).total == pytest.approx(2.0)
    assert P.compare(_report(3.0), _report(3.0)).total == 1.0
    assert float(P.compare(_report(3.0), _report(1.0))) == 3.0
    with pytest.raises(ZeroTime):
        P.compare(_report(0.0), _report(1.0))


def test_rdu_over_gpu_gemm_peak():
    g = chain([K.Gemm(1 << 20, 1024, 1024)])
    s = P.compare(P.estimate_kernel_by_kernel(g, BARE_GPU), dataflow(g))
    assert s.total == pytest.approx(638.976 / 311.87, rel=1e-9)
    assert s.total == pytest.approx(2.049, abs=1e-3)


# ---- invariants -------------------------------------------------------

@pytest.mark.parametrize("name", DECODERS)
def test_roofline_sanity(name):
    g = build_decoder(name, 1 << 18)
    for r, peak, bw in ((dataflow(g, FULL), P.peak_flops(FULL), FULL.dram_bytes_per_s),
                        (P.estimate_kernel_by_kernel(g, GPU), None, GPU.dram_bytes_per_s)):
        for k in r.kernels:
            kpeak = peak or P.gpu_peak_for(g.kernel(k.kernel_id), GPU)
            assert k.time_s >= k.flops / kpeak * (1 - 1e-12)
            assert k.time_s >= k.bytes_moved / bw * (1 - 1e-12)


@pytest.mark.parametrize("name", DECODERS)
@pytest.mark.parametrize("L", [1 << 18, 1 << 20])
def test_dataflow_beats_kernel_by_kernel_on_same_chip(name, L):
    g = build_decoder(name, L)
    for chip in (CHIP, FULL):
        assert dataflow(g, chip).total_time_s <= P.estimate_kernel_by_kernel(g, chip).total_time_s


@pytest.mark.parametrize("c", [2, 3, 10])
def test_scale_invariance(c):
    base = [K.Gemm(4096, 64, 64), K.Elementwise("op", 1 << 16, 3)]
    scaled = [K.Gemm(4096 * c, 64, 64), K.Elementwise("op", (1 << 16) * c, 3)]
    for est in (lambda g: dataflow(g), lambda g: P.estimate_kernel_by_kernel(g, BARE_GPU)):
        assert est(chain(scaled)).total_time_s == pytest.approx(c * est(chain(base)).total_time_s, rel=1e-15)


def test_bottleneck_crossover():
    g = chain([K.Gemm(64, 4, 4)])
    r = P.estimate_kernel_by_kernel(g, BARE_GPU)
    k = r.kernels[0]
    cross = k.bytes_moved / k.compute_s
    above = dataclasses.replace(BARE_GPU, dram_bytes_per_s=cross * 1.001)
    below = dataclasses.replace(BARE_GPU, dram_bytes_per_s=cross * 0.999)
    assert P.estimate_kernel_by_kernel(g, above).kernels[0].bottleneck is P.Bottleneck.COMPUTE
    assert P.estimate_kernel_by_kernel(g, below).kernels[0].bottleneck is P.Bottleneck.MEMORY


# ---- export -----------------------------------------------------------

def test_csv_format():
    r = dataflow(build_decoder("attention", 1 << 18))
    rows = list(csv.reader(io.StringIO(P.to_csv([r]))))
    assert tuple(rows[0]) == P.CSV_COLUMNS
    assert [row[2] for row in rows[1:]] == sorted(row[2] for row in rows[1:])
    flops = rows[1][4]
    assert len(flops.split("e")[0].replace(".", "").lstrip("-")) == 6


def test_json_summary_is_stable():
    r = dataflow(build_decoder("mamba-b", 1 << 18), FULL)
    text = P.to_json(r.summary())
    assert json.loads(text)["configurations"] == 1
    assert text == P.to_json(dataflow(build_decoder("mamba-b", 1 << 18), FULL).summary())
