"""Oracle-equivalence suites run by ``rdusim verify``.

The kernels suite never imports the fabric, so ``verify kernels`` exercises
the reference algorithms on their own.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels as K


@dataclass(frozen=True)
class CaseResult:
    suite: str
    name: str
    passed: bool
    inputs: str = ""
    expected: str = ""
    got: str = ""


def _fmt(a, limit=8) -> str:
    a = np.asarray(a).reshape(-1)
    body = np.array2string(a[:limit], precision=4, separator=", ", max_line_width=200)
    return body + (f" ... ({a.size} values)" if a.size > limit else "")


def _case(suite, name, x, expected, got, rtol=None) -> CaseResult:
    expected, got = np.asarray(expected), np.asarray(got)
    if rtol is None:
        ok = expected.shape == got.shape and np.array_equal(expected, got)
    else:
        err = np.linalg.norm(got - expected) / max(np.linalg.norm(expected), 1e-300)
        ok = bool(err < rtol)
    if ok:
        return CaseResult(suite, name, True)
    # echo the first failing frame of a batch
    if np.ndim(x) == 2 and np.ndim(expected) == 2:
        row = int(np.argmax(np.abs(got - expected).max(axis=1)))
        return CaseResult(suite, name, False, _fmt(np.asarray(x)[row]), _fmt(expected[row]), _fmt(got[row]))
    return CaseResult(suite, name, False, _fmt(x), _fmt(expected), _fmt(got))


def kernel_cases(seed: int = 0) -> list[CaseResult]:
    rng = np.random.default_rng(seed)
    out = []
    for n in (2, 8, 64, 1024):
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        out.append(_case("kernels", f"cooley-tukey n={n} vs dft", x, K.dft_naive(x), K.fft_cooley_tukey(x), 1e-10))
    for n in (1 << 10, 1 << 14):
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        ref = K.fft_cooley_tukey(x)
        for r in (16, 32):
            for v in K.FftVariant:
                plan = K.FftPlan(n, r, v)
                out.append(_case("kernels", f"bailey {v.value} n={n} R={r}", x, ref, K.fft_bailey(x, plan), 1e-8))
        inv = K.fft_bailey(ref, K.FftPlan(n, 32, K.FftVariant.VECTOR, K.Direction.INVERSE))
        out.append(_case("kernels", f"bailey inverse round trip n={n}", ref, x, inv, 1e-10))
    u, k = rng.standard_normal(256), rng.standard_normal(256)
    out.append(_case("kernels", "fft_conv vs direct convolution", u, K.conv_direct(u, k), K.fft_conv(u, k), 1e-9))
    for n in (1, 7, 8, 1000, 4096):
        x = rng.integers(-1000, 1000, n)
        ref = K.scan_sequential_exclusive(x)
        out.append(_case("kernels", f"hillis-steele n={n}", x, ref, K.scan_hillis_steele(x)))
        out.append(_case("kernels", f"blelloch n={n}", x, ref, K.scan_blelloch(x)))
        out.append(_case("kernels", f"tiled R=32 n={n}", x, ref, K.scan_tiled(x, 32)))
    return out


def fabric_cases(seed: int = 0, fault: Optional[str] = None, frames: int = 200) -> list[CaseResult]:
    from . import fabric as F

    rng = np.random.default_rng(seed)
    out = []

    def fft_config(g):
        cfg = F.build_mode_config(F.PcuMode.FFT, g)
        if fault != "butterfly":
            return cfg
        # corrupt one twiddle on the last butterfly level
        fu = [list(r) for r in cfg.fu]
        s, j = F.ilog2(g.lanes) - 1, g.lanes // 2 + 1
        old = fu[s][j]
        fu[s][j] = F.FuConfig(old.op, old.input_select, -old.constant, old.accumulate)
        return F.PcuConfig(cfg.geometry, cfg.mode, tuple(tuple(r) for r in fu), cfg.links, cfg.input_perm)

    ex = F.pcu_eval(fft_config(F.PcuGeometry(4, 2)), [1, 1, 1, 1]).frames[0]
    out.append(_case("fabric", "fft worked example [1,1,1,1]", [1, 1, 1, 1], [4, 0, 0, 0], ex, 1e-12))
    for r in (4, 8, 16, 32):
        g = F.PcuGeometry(r, max(F.ilog2(r), 6))
        x = rng.standard_normal((frames, r)) + 1j * rng.standard_normal((frames, r))
        out.append(_case("fabric", f"fft mode R={r} vs dft", x, K.dft_naive(x), F.pcu_eval(fft_config(g), x).frames, 1e-5))
        inv = F.build_mode_config(F.PcuMode.FFT, F.PcuGeometry(r, g.stages + 1), direction=K.Direction.INVERSE,
                                  post_scale=np.full(r, 1.0 / r))
        out.append(_case("fabric", f"fft mode inverse R={r}", x, K.dft_naive(x, K.Direction.INVERSE),
                         F.pcu_eval(inv, x).frames, 1e-5))
        xi = rng.integers(-1000, 1000, (frames, r))
        ref = K.scan_sequential_exclusive(xi)
        for mode in (F.PcuMode.HS_SCAN, F.PcuMode.B_SCAN):
            cfg = F.build_mode_config(mode, F.PcuGeometry(r, 2 * F.ilog2(r)))
            out.append(_case("fabric", f"{mode.value.lower()} R={r}", xi, ref, F.pcu_eval(cfg, xi).frames))
        red = F.pcu_eval(F.build_mode_config(F.PcuMode.REDUCTION, g), xi).frames[:, 0]
        out.append(_case("fabric", f"reduction R={r}", xi, xi.sum(axis=1), red))
    for mode in (F.PcuMode.HS_SCAN, F.PcuMode.B_SCAN):
        got = F.pcu_eval(F.build_mode_config(mode, F.PcuGeometry(4, 4)), [2, 4, 6, 8]).frames[0]
        out.append(_case("fabric", f"{mode.value.lower()} worked example [2,4,6,8]", [2, 4, 6, 8], [0, 2, 6, 12], got))
    g = F.PcuGeometry(32, 12)
    a = rng.integers(-50, 50, (64, 12))
    w = rng.integers(-50, 50, (12, 32))
    sysc = F.build_mode_config(F.PcuMode.SYSTOLIC, g, weights=w)
    got = F.pcu_eval(sysc, np.pad(a, ((0, 0), (0, 20)))).frames
    out.append(_case("fabric", "systolic 32x12 vs gemm", a, K.gemm(a, w), got))
    return out


def run_suites(scope: str, fault: Optional[str] = None) -> dict[str, list[CaseResult]]:
    names = ("kernels", "fabric") if scope == "all" else (scope,)
    res = {}
    for n in names:
        res[n] = fabric_cases(fault=fault) if n == "fabric" else kernel_cases()
    return res
