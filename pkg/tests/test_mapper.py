import itertools

import pytest
from hypothesis import given, settings, strategies as st

from rdusim import kernels as K
from rdusim import mapper as MP
from rdusim.errors import IllegalModeForKernel, Infeasible, KernelTooLarge
from rdusim.fabric import PcuMode
from rdusim.workloads import TensorDesc, build_decoder

from _support import CHIP, FULL, chain


def ew(work, ops=1):
    return K.Elementwise("op", work, ops)


def bottleneck_rate(g, counts, chip):
    vals = []
    for k, n in zip(g.kernels, counts):
        m = MP.select_mode(k, chip)
        vals.append(MP.kernel_throughput(k, m, n, chip) / K.work_count(k).normalized_units)
    return min(vals)


def brute_force(g, chip):
    P, k = chip.num_pcus, len(g.kernels)
    best = 0.0
    for counts in itertools.product(range(1, P + 1), repeat=k):
        if sum(counts) <= P:
            best = max(best, bottleneck_rate(g, counts, chip))
    return best


# ---- allocation -------------------------------------------------------

def test_single_kernel_gets_all_pcus():
    plan = MP.balance_pipeline(chain([K.Gemm(1024, 32, 32)]), CHIP)
    assert plan.kernels[0].pcus == CHIP.num_pcus


def test_two_kernel_example():
    plan = MP.balance_pipeline(chain([ew(100), ew(300)]), CHIP.but(num_pcus=8))
    assert [a.pcus for a in plan.kernels] == [2, 6]


def test_three_kernel_example():
    plan = MP.balance_pipeline(chain([ew(200), ew(100), ew(100)]), CHIP.but(num_pcus=8))
    assert [a.pcus for a in plan.kernels] == [4, 2, 2]


KIND = st.one_of(
    st.builds(ew, st.integers(1, 10**6), st.integers(1, 40)),
    st.builds(lambda m: K.Gemm(m, 32, 32), st.integers(1, 10**5)),
    st.builds(lambda L, c: K.Scan(K.ScanDesc(L, K.ScanVariant.C_SCAN), c), st.sampled_from([64, 1024]),
              st.integers(1, 128)),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(KIND, min_size=1, max_size=3), st.integers(3, 16))
def test_water_filling_is_optimal(kinds, pcus):
    chip = CHIP.but(num_pcus=pcus)
    g = chain(kinds)
    plan = MP.balance_pipeline(g, chip)
    got = bottleneck_rate(g, [a.pcus for a in plan.kernels], chip)
    assert got == pytest.approx(brute_force(g, chip), rel=1e-12)
    assert plan.total_pcus <= pcus


@settings(max_examples=30, deadline=None)
@given(st.lists(KIND, min_size=1, max_size=4), st.integers(4, 40))
def test_more_pcus_never_slower(kinds, pcus):
    g = chain(kinds)
    a = MP.balance_pipeline(g, CHIP.but(num_pcus=pcus)).bottleneck_time_s
    b = MP.balance_pipeline(g, CHIP.but(num_pcus=pcus + 1)).bottleneck_time_s
    assert b <= a * (1 + 1e-12)


def test_too_many_kernels_infeasible():
    with pytest.raises(Infeasible):
        MP.balance_pipeline(chain([ew(1)] * 3), CHIP.but(num_pcus=2))


# ---- modes and rates --------------------------------------------------

def test_baseline_chip_never_uses_fft_mode():
    for name in ("hyena-vector", "hyena-gemm"):
        g = build_decoder(name, 4096)
        for k in g.kernels:
            m = MP.select_mode(k, CHIP)
            assert m in CHIP.supported_modes and m is not PcuMode.FFT
            if isinstance(k.kind, K.Fft):
                assert m is (PcuMode.SYSTOLIC if k.kind.plan.variant is K.FftVariant.GEMM else PcuMode.ELEMENTWISE)


def test_fft_chip_uses_fft_mode_for_vector_fft():
    g = build_decoder("hyena-vector", 4096)
    assert MP.select_mode(g.kernel("fft_u"), FULL) is PcuMode.FFT


def test_illegal_mode_for_kernel():
    with pytest.raises(IllegalModeForKernel):
        MP.pcu_rate(K.Gemm(4, 4, 4), PcuMode.FFT, FULL)
    with pytest.raises(IllegalModeForKernel):
        MP.kernel_throughput(K.Fft(K.FftPlan(1024, 32)), PcuMode.FFT, 1, CHIP)


def test_gemm_peak_rate():
    r = MP.kernel_throughput(K.Gemm(10, 10, 10), PcuMode.SYSTOLIC, 520, CHIP)
    assert r == 520 * 384 * 1.6e9
    assert 2 * r / 1e12 == pytest.approx(638.98, rel=1e-3)


def test_fft_mode_rate():
    fft = K.Fft(K.FftPlan(1024, 32))
    ideal = FULL.but(complex_lane_packing=1, fft_stages_per_level=1)
    assert MP.pcu_rate(fft, PcuMode.FFT, ideal) == 32 * 5
    # default calibration: two lanes per complex value, three stages per butterfly level
    assert MP.pcu_rate(fft, PcuMode.FFT, FULL) == 40


def test_c_scan_rate_is_channel_bound():
    scan = K.Scan(K.ScanDesc(1 << 20, K.ScanVariant.C_SCAN), 32)
    chip = CHIP.but(recurrence_latency_cycles=1.0)
    for n in (1, 4, 520):
        assert MP.kernel_throughput(scan, PcuMode.ELEMENTWISE, n, chip) / chip.freq_hz == 32


def test_scan_mode_rate_is_one_tile_per_cycle():
    b = K.Scan(K.ScanDesc(1 << 20, K.ScanVariant.B_SCAN), 32)
    k = K.work_count(b).normalized_units / ((1 << 20) * 32)
    assert MP.pcu_rate(b, PcuMode.B_SCAN, FULL) == 32 * k


def test_degraded_rate_is_one_stage():
    fft = K.Fft(K.FftPlan(1024, 32))
    assert MP.pcu_rate(fft, PcuMode.ELEMENTWISE, CHIP) == pytest.approx(32 / 12)


# ---- partitioning -----------------------------------------------------

def test_decoders_fit_one_configuration():
    for name in ("attention", "hyena-vector", "mamba-b"):
        plan = MP.partition_into_configs(build_decoder(name, 1 << 20), FULL)
        assert len(plan.configs) == 1 and plan.staged_edges == ()


def test_chain_on_two_pcu_chip_splits():
    g = chain([ew(10), ew(10), ew(10)])
    plan = MP.partition_into_configs(g, CHIP.but(num_pcus=2))
    assert [c.graph.kernel_ids for c in plan.configs] == [["k0", "k1"], ["k2"]]
    assert [(e.producer, e.consumer) for e in plan.staged_edges] == [("k1", "k2")]
    assert plan.staged_bytes == g.edges[1].tensor.nbytes


def test_partition_is_topologically_consistent():
    g = build_decoder("mamba-b", 1 << 16)
    plan = MP.partition_into_configs(g, FULL.but(num_pcus=3))
    where = {k: i for i, c in enumerate(plan.configs) for k in c.graph.kernel_ids}
    assert sorted(where) == sorted(g.kernel_ids)
    assert all(where[e.producer] <= where[e.consumer] for e in g.edges)


def test_kernel_too_large():
    huge = CHIP.num_pmus * CHIP.pmu_bytes + 1
    with pytest.raises(KernelTooLarge):
        MP.partition_into_configs(chain([ew(1), ew(1)], scratch=[0, huge]), CHIP)


def test_plans_are_deterministic():
    a = MP.partition_into_configs(build_decoder("hyena-gemm", 1 << 18), CHIP).to_json()
    b = MP.partition_into_configs(build_decoder("hyena-gemm", 1 << 18), CHIP).to_json()
    assert a == b


# ---- memory -----------------------------------------------------------

def test_memory_ok_with_double_buffering():
    g = build_decoder("attention", 1 << 20)
    plan = MP.balance_pipeline(g, CHIP)
    assert MP.check_memory(g, plan, CHIP) == []


def test_full_buffering_exceeds_pmus():
    g = build_decoder("attention", 1 << 20)
    viol = MP.check_memory(g, None, CHIP, buffering="full")
    assert [v.rule for v in viol] == ["PmuCapacityExceeded"]
    assert viol[0].needed_pmus > CHIP.num_pmus


def test_zero_edge_graph_has_no_memory_violation():
    g = chain([ew(5)])
    assert g.edges == ()
    assert MP.check_memory(g, MP.balance_pipeline(g, CHIP), CHIP) == []


def test_tile_bytes():
    assert MP.tile_bytes(TensorDesc("x", (1 << 20, 32)), 32) == 32 * 32 * 2
    assert MP.tile_bytes(TensorDesc("x", (4, 8), 4), 32) == 4 * 8 * 4


def test_dram_streams_are_buffered():
    g = chain([ew(5), ew(5)])
    bufs = MP.edge_buffers(g, CHIP)
    assert [(b.producer, b.consumer) for b in bufs] == [("k0", "k1"), (MP.DRAM, "k0"), ("k1", MP.DRAM)]
    assert all(b.nbytes == 2 * 32 * 4 * 2 for b in bufs)


def test_single_kernel_without_pmu_room_is_too_large():
    tiny = CHIP.but(num_pmus=1, pmu_bytes=1024)
    with pytest.raises(KernelTooLarge):
        MP.partition_into_configs(chain([ew(5)]), tiny)
