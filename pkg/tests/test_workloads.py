import dataclasses
import json
import math

import pytest

from rdusim import kernels as K
from rdusim import workloads as W

CORE_FFT = ("fft_u", "fft_k", "ifft")


def units(gw, ids):
    return sum(gw.per_kernel[i].normalized_units for i in ids)


@pytest.mark.parametrize("name", W.DECODERS)
@pytest.mark.parametrize("L", [1024, 1 << 20])
def test_decoders_validate_clean(name, L):
    g = W.build_decoder(name, L, 32, 32)
    assert W.graph_validate(g) == []
    assert W.topological_order(g) == g.kernel_ids


def test_kernel_inventories():
    assert len(W.build_attention_decoder(64, 8).kernels) == 12
    assert len(W.build_hyena_decoder(64, 8).kernels) == 15
    assert len(W.build_mamba_decoder(64, 8).kernels) == 12


def test_unknown_decoder():
    with pytest.raises(KeyError):
        W.build_decoder("rwkv", 64)


# ---- work examples ----------------------------------------------------

def test_qk_macs_small_example():
    gw = W.graph_flops(W.build_attention_decoder(4, 2))
    assert gw.per_kernel["qk"].normalized_units == 4 * 4 * 2
    assert gw.per_kernel["qk"].real_flops == 2 * 32


def test_core_attention_macs_at_2_20():
    gw = W.graph_flops(W.build_attention_decoder(1 << 20, 32))
    assert units(gw, ("qk", "av")) == 2 * (1 << 20) ** 2 * 32 == pytest.approx(7.0368744e13)


def test_hyena_fft_work_with_padding():
    gw = W.graph_flops(W.build_hyena_decoder(1024, 32))
    assert units(gw, CORE_FFT) == 3 * 32 * 2048 * 11 == 2_162_688


def test_hyena_fft_work_without_padding():
    gw = W.graph_flops(W.build_hyena_decoder(1024, 32, pad=False))
    assert units(gw, CORE_FFT) == 3 * 32 * 1024 * 10


def test_doubling_seqlen_scales_core_work():
    a = [W.graph_flops(W.build_attention_decoder(L, 32)) for L in (1 << 19, 1 << 20)]
    h = [W.graph_flops(W.build_hyena_decoder(L, 32)) for L in (1 << 19, 1 << 20)]
    assert units(a[1], ("qk", "av")) / units(a[0], ("qk", "av")) == pytest.approx(4.0, abs=0.01)
    assert units(h[1], CORE_FFT) / units(h[0], CORE_FFT) == pytest.approx(2.1, abs=0.05)


@pytest.mark.parametrize("L", [256, 1024, 1 << 16])
def test_hs_over_b_scan_work(L):
    hs = W.graph_flops(W.build_mamba_decoder(L, 32, K.ScanVariant.HS_SCAN)).per_kernel["scan"]
    b = W.graph_flops(W.build_mamba_decoder(L, 32, K.ScanVariant.B_SCAN)).per_kernel["scan"]
    assert hs.normalized_units / b.normalized_units == math.log2(L) / 2


def test_by_kind_sums_to_total():
    gw = W.graph_flops(W.build_hyena_decoder(4096, 32, variant=K.FftVariant.GEMM))
    assert sum(w.real_flops for w in gw.by_kind.values()) == pytest.approx(gw.total.real_flops)
    assert set(gw.by_kind) == {"ELEMENTWISE", "GEMM", "FFT"}


# ---- validation failures ---------------------------------------------

def test_shape_mismatch_detected():
    g = W.build_attention_decoder(16, 4)
    e = g.edges[0]
    wrong = W.TensorDesc(e.tensor.name, (e.tensor.shape[0] + 1, *e.tensor.shape[1:]))
    bad = dataclasses.replace(g, edges=(dataclasses.replace(e, tensor=wrong), *g.edges[1:]))
    assert [v.rule for v in W.graph_validate(bad)] == ["ShapeMismatch"]


def test_cycle_detected():
    g = W.build_attention_decoder(16, 4)
    first, last = g.kernels[0], g.kernels[-1]
    back = W.Edge(last.id, first.id, last.outputs[0])
    bad = dataclasses.replace(g, kernels=(dataclasses.replace(first, inputs=(*first.inputs, last.outputs[0])),
                                          *g.kernels[1:]),
                              edges=(*g.edges, back))
    rules = [v.rule for v in W.graph_validate(bad)]
    assert rules == ["CycleDetected"]
    assert W.topological_order(bad) is None


def test_dangling_and_duplicate():
    g = W.build_attention_decoder(16, 4)
    bad = dataclasses.replace(g, kernels=g.kernels + (g.kernels[0],),
                              edges=g.edges + (W.Edge("ghost", g.kernels[0].id, g.kernels[0].inputs[0]),))
    rules = {v.rule for v in W.graph_validate(bad)}
    assert {"DuplicateKernelId", "DanglingEdge"} <= rules


def test_unbound_input():
    g = W.build_attention_decoder(16, 4)
    bad = dataclasses.replace(g, external_inputs=())
    assert "UnboundInput" in {v.rule for v in W.graph_validate(bad)}


def test_tensor_rejects_bad_dims():
    with pytest.raises(ValueError):
        W.TensorDesc("t", (0, 4))


# ---- serialisation ----------------------------------------------------

def test_to_json_round_trips_structure():
    g = W.build_mamba_decoder(256, 16)
    d = json.loads(g.to_json())
    assert [k["id"] for k in d["kernels"]] == g.kernel_ids
    assert len(d["edges"]) == len(g.edges)
    scan = next(k for k in d["kernels"] if k["id"] == "scan")
    assert scan["kind"] == "SCAN"
    assert g.to_json() == W.build_mamba_decoder(256, 16).to_json()
