from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rdusim import kernels as K
from rdusim.errors import EmptyInput, NonPowerOfTwoLength, PlanInvalid, ShapeMismatch, UnderSpecifiedKernel


def crand(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# ---- FFT ---------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 4, 8, 64, 512])
def test_cooley_tukey_matches_numpy(n):
    x = crand(np.random.default_rng(n), n)
    np.testing.assert_allclose(K.fft_cooley_tukey(x), np.fft.fft(x), atol=1e-9)


def test_dft_naive_matches_numpy_both_directions():
    x = crand(np.random.default_rng(1), 3, 16)
    np.testing.assert_allclose(K.dft_naive(x), np.fft.fft(x), atol=1e-10)
    np.testing.assert_allclose(K.dft_naive(x, K.Direction.INVERSE), np.fft.ifft(x), atol=1e-12)


def test_dft_of_constant_vector():
    np.testing.assert_allclose(K.dft_naive(np.ones(4)), [4, 0, 0, 0], atol=1e-12)


def test_butterfly_count_is_half_n_log_n():
    stats = K.OpCounter()
    K.fft_cooley_tukey(np.ones(32), stats=stats)
    assert stats.butterflies == 16 * 5


def test_non_power_of_two_rejected():
    with pytest.raises(NonPowerOfTwoLength):
        K.fft_cooley_tukey(np.ones(12))


@pytest.mark.parametrize("variant", list(K.FftVariant))
@pytest.mark.parametrize("n,r", [(32, 32), (64, 32), (1024, 16), (4096, 32), (1 << 15, 32)])
def test_bailey_matches_cooley_tukey(variant, n, r):
    x = crand(np.random.default_rng(n + r), n)
    got = K.fft_bailey(x, K.FftPlan(n, r, variant))
    np.testing.assert_allclose(got, K.fft_cooley_tukey(x), atol=1e-8 * np.sqrt(n))


def test_bailey_inverse_round_trip():
    x = crand(np.random.default_rng(3), 2048)
    plan = K.FftPlan(2048, 32, K.FftVariant.GEMM)
    y = K.fft_bailey(x, plan)
    back = K.fft_bailey(y, K.FftPlan(2048, 32, K.FftVariant.GEMM, K.Direction.INVERSE))
    np.testing.assert_allclose(back, x, atol=1e-10)


def test_plan_validation():
    assert K.FftPlan(48, 32).violations()
    with pytest.raises(PlanInvalid):
        K.FftPlan(64, 12).check()
    with pytest.raises(PlanInvalid):
        K.FftPlan(64, 1).check()
    assert K.FftPlan(8, 32).violations() == ["tile 32 exceeds length 8"]
    assert K.FftPlan(1 << 21, 32).passes == 5


def test_fft_conv_small_example():
    np.testing.assert_allclose(K.fft_conv([1, 1, 0, 0], [1, 1, 0, 0]).real, [1, 2, 1, 0], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 6), st.integers(0, 2**31 - 1))
def test_fft_conv_matches_direct(lg, seed):
    n = 1 << lg
    rng = np.random.default_rng(seed)
    u, k = rng.standard_normal(n), rng.standard_normal(n)
    np.testing.assert_allclose(K.fft_conv(u, k).real, K.conv_direct(u, k), atol=1e-9)


# ---- scans -------------------------------------------------------------

def test_worked_scan_example():
    x = [2, 4, 6, 8]
    for f in (K.scan_sequential_exclusive, K.scan_hillis_steele, K.scan_blelloch):
        assert list(f(x)) == [0, 2, 6, 12]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-10**6, 10**6), min_size=1, max_size=300), st.sampled_from([2, 4, 8, 32]))
def test_parallel_scans_equal_sequential(xs, tile):
    ref = K.scan_sequential_exclusive(xs)
    np.testing.assert_array_equal(K.scan_hillis_steele(xs), ref)
    np.testing.assert_array_equal(K.scan_blelloch(xs), ref)
    np.testing.assert_array_equal(K.scan_tiled(xs, tile), ref)


def test_scan_operation_counts():
    hs, b = K.OpCounter(), K.OpCounter()
    K.scan_hillis_steele(np.arange(8), stats=hs)
    K.scan_blelloch(np.arange(8), stats=b)
    assert hs.steps == 3 and b.steps == 6
    assert hs.ops == 7 + 6 + 4
    assert b.ops == 2 * (8 - 1)


def test_empty_scan_rejected():
    with pytest.raises(EmptyInput):
        K.scan_blelloch([])


def test_batched_scan_acts_on_last_axis():
    x = np.arange(12).reshape(3, 4)
    np.testing.assert_array_equal(K.scan_blelloch(x), [K.scan_sequential_exclusive(r) for r in x])


# ---- GEMM and work accounting -----------------------------------------

def test_gemm_shape_check():
    with pytest.raises(ShapeMismatch):
        K.gemm(np.ones((2, 3)), np.ones((4, 2)))
    np.testing.assert_array_equal(K.gemm(np.eye(2), [[1, 2], [3, 4]]), [[1, 2], [3, 4]])


def test_gemm_work():
    w = K.work_count(K.Gemm(4, 4, 2))
    assert w.normalized_units == 32 and w.real_flops == 64


@pytest.mark.parametrize("L", [1 << 18, 1 << 19, 1 << 20])
def test_gemm_over_vector_fft_work_is_r_over_log_r(L):
    g = K.Fft(K.FftPlan(L, 32, K.FftVariant.GEMM))
    v = K.Fft(K.FftPlan(L, 32, K.FftVariant.VECTOR))
    assert K.fft_units_exact(g) / K.fft_units_exact(v) == Fraction(32, 5)


def test_scan_work_formulas():
    assert K.work_count(K.Scan(K.ScanDesc(8, K.ScanVariant.B_SCAN))).normalized_units == 16
    assert K.work_count(K.Scan(K.ScanDesc(1 << 20, K.ScanVariant.C_SCAN), 32)).normalized_units == 33554432
    hs = K.work_count(K.Scan(K.ScanDesc(1024, K.ScanVariant.HS_SCAN))).normalized_units
    assert hs / 2048 == 10 / 2


def test_work_count_rejects_bad_kinds():
    with pytest.raises(UnderSpecifiedKernel):
        K.work_count(K.Gemm(0, 1, 1))
    with pytest.raises(UnderSpecifiedKernel):
        K.work_count(K.Fft(K.FftPlan(48, 32)))
