"""
Decoder dataflow graphs: attention, Hyena (FFT convolution) and Mamba (scan).

All three builders share one decoder template (pre-norm, projections,
residuals, 4x MLP) and differ only in the sequence-mixing core. Element-wise
kernels are charged one op per element unless noted (softmax 5, complex
frequency-domain multiply 6, Mamba discretization 6).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .kernels import (
    Direction,
    Elementwise,
    Fft,
    FftPlan,
    FftVariant,
    Gemm,
    KernelKind,
    Scan,
    ScanDesc,
    ScanVariant,
    WorkCount,
    ZERO_WORK,
    work_count,
)

FP16 = 2
COMPLEX_FP16 = 4
MLP_EXPANSION = 4


@dataclass(frozen=True)
class TensorDesc:
    name: str
    shape: tuple
    element_bytes: int = FP16

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if not self.shape or min(self.shape) < 1:
            raise ValueError(f"tensor {self.name}: dimensions must be >= 1, got {self.shape}")
        if self.element_bytes < 1:
            raise ValueError(f"tensor {self.name}: element_bytes must be positive")

    @property
    def elements(self) -> int:
        return math.prod(self.shape)

    @property
    def nbytes(self) -> int:
        return self.elements * self.element_bytes


@dataclass(frozen=True)
class KernelDesc:
    id: str
    kind: KernelKind
    inputs: tuple = ()
    outputs: tuple = ()
    scratch_bytes: int = 0

    @property
    def kind_name(self) -> str:
        return self.kind.name


@dataclass(frozen=True)
class Edge:
    producer: str
    consumer: str
    tensor: TensorDesc


@dataclass(frozen=True)
class DataflowGraph:
    name: str
    kernels: tuple
    edges: tuple
    external_inputs: tuple
    external_outputs: tuple

    def kernel(self, kid: str) -> KernelDesc:
        for k in self.kernels:
            if k.id == kid:
                return k
        raise KeyError(kid)

    @property
    def kernel_ids(self) -> list[str]:
        return [k.id for k in self.kernels]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kernels": [
                {
                    "id": k.id,
                    "kind": k.kind_name,
                    "params": _kind_params(k.kind),
                    "inputs": [t.name for t in k.inputs],
                    "outputs": [t.name for t in k.outputs],
                    "work_units": work_count(k).normalized_units,
                    "flops": work_count(k).real_flops,
                }
                for k in self.kernels
            ],
            "edges": [
                {"producer": e.producer, "consumer": e.consumer, "tensor": e.tensor.name}
                for e in self.edges
            ],
            "tensors": {
                t.name: {"shape": list(t.shape), "element_bytes": t.element_bytes}
                for t in _all_tensors(self)
            },
            "external_inputs": [t.name for t in self.external_inputs],
            "external_outputs": [t.name for t in self.external_outputs],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _kind_params(kind) -> dict:
    if isinstance(kind, Gemm):
        return {"M": kind.M, "N": kind.N, "K": kind.K}
    if isinstance(kind, Fft):
        p = kind.plan
        return {"length": p.length, "tile": p.tile, "variant": p.variant.value,
                "direction": p.direction.value, "batch": kind.batch}
    if isinstance(kind, Scan):
        d = kind.desc
        return {"length": d.length, "variant": d.variant.value, "tile": d.tile,
                "channels": kind.channels}
    return {"op": kind.op_name, "elements": kind.element_count,
            "ops_per_element": kind.ops_per_element}


def _all_tensors(g: DataflowGraph) -> list[TensorDesc]:
    seen = {}
    for t in g.external_inputs:
        seen.setdefault(t.name, t)
    for k in g.kernels:
        for t in (*k.inputs, *k.outputs):
            seen.setdefault(t.name, t)
    return [seen[n] for n in sorted(seen)]


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GraphViolation:
    rule: str
    where: str

    def __str__(self):
        return f"{self.rule}({self.where})"


def topological_order(g: DataflowGraph) -> Optional[list[str]]:
    """Kahn's algorithm, lowest kernel index first; None if there is a cycle."""
    index = {k.id: i for i, k in enumerate(g.kernels)}
    indeg = {k.id: 0 for k in g.kernels}
    succ = {k.id: [] for k in g.kernels}
    for e in g.edges:
        if e.producer in index and e.consumer in index:
            succ[e.producer].append(e.consumer)
            indeg[e.consumer] += 1
    ready = sorted((k for k, d in indeg.items() if d == 0), key=index.get)
    order = []
    while ready:
        k = ready.pop(0)
        order.append(k)
        for s in succ[k]:
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)
                ready.sort(key=index.get)
    return order if len(order) == len(g.kernels) else None


def graph_validate(g: DataflowGraph) -> list[GraphViolation]:
    out: list[GraphViolation] = []
    ids = [k.id for k in g.kernels]
    if len(set(ids)) != len(ids):
        out.append(GraphViolation("DuplicateKernelId", ",".join(sorted({i for i in ids if ids.count(i) > 1}))))
    kmap = {k.id: k for k in g.kernels}
    external = {t.name: t for t in g.external_inputs}
    produced: dict[tuple[str, str], TensorDesc] = {}
    for e in g.edges:
        where = f"{e.producer}->{e.consumer}:{e.tensor.name}"
        if e.producer not in kmap or e.consumer not in kmap:
            out.append(GraphViolation("DanglingEdge", where))
            continue
        src = {t.name: t for t in kmap[e.producer].outputs}.get(e.tensor.name)
        dst = {t.name: t for t in kmap[e.consumer].inputs}.get(e.tensor.name)
        if src is None or dst is None or src != e.tensor or dst != e.tensor:
            out.append(GraphViolation("ShapeMismatch", where))
        produced[(e.consumer, e.tensor.name)] = e.tensor
    for k in g.kernels:
        for t in k.inputs:
            if (k.id, t.name) not in produced and t.name not in external:
                out.append(GraphViolation("UnboundInput", f"{k.id}:{t.name}"))
            elif t.name in external and (k.id, t.name) not in produced and external[t.name] != t:
                out.append(GraphViolation("ShapeMismatch", f"external->{k.id}:{t.name}"))
        if isinstance(k.kind, Gemm) and k.inputs and k.outputs:
            g_ = k.kind
            if k.inputs[0].elements != g_.M * g_.K or sum(t.elements for t in k.outputs) != g_.M * g_.N:
                out.append(GraphViolation("KindShapeMismatch", k.id))
    if topological_order(g) is None:
        out.append(GraphViolation("CycleDetected", g.name))
    return out


# --------------------------------------------------------------------------
# builders
# --------------------------------------------------------------------------

class _Builder:
    def __init__(self, name: str):
        self.name = name
        self.kernels: list[KernelDesc] = []
        self.external: dict[str, TensorDesc] = {}
        self.producer: dict[str, str] = {}

    def ext(self, name, shape, element_bytes=FP16) -> TensorDesc:
        t = TensorDesc(name, shape, element_bytes)
        self.external[name] = t
        return t

    def add(self, kid, kind, inputs: Iterable[TensorDesc], outputs: Iterable[TensorDesc]):
        k = KernelDesc(kid, kind, tuple(inputs), tuple(outputs))
        self.kernels.append(k)
        for t in k.outputs:
            self.producer[t.name] = kid
        return k.outputs if len(k.outputs) > 1 else k.outputs[0]

    def build(self, outputs: Iterable[TensorDesc]) -> DataflowGraph:
        edges = []
        for k in self.kernels:
            for t in k.inputs:
                if t.name in self.producer:
                    edges.append(Edge(self.producer[t.name], k.id, t))
        return DataflowGraph(self.name, tuple(self.kernels), tuple(edges),
                             tuple(self.external.values()), tuple(outputs))


def _ew(b: _Builder, kid, op, inputs, out_name, ops=1, shape=None, element_bytes=FP16):
    shape = shape or inputs[0].shape
    out = TensorDesc(out_name, shape, element_bytes)
    return b.add(kid, Elementwise(op, out.elements, ops), inputs, [out])


def _gemm(b: _Builder, kid, a: TensorDesc, w: TensorDesc, out_names):
    M, K = a.shape
    N = w.shape[1]
    n_out = len(out_names)
    outs = [TensorDesc(n, (M, N // n_out)) for n in out_names]
    return b.add(kid, Gemm(M, N, K), [a, w], outs)


def _tail(b: _Builder, mixed: TensorDesc, x: TensorDesc, L: int, d: int) -> TensorDesc:
    """Output projection, residuals and MLP shared by all decoders."""
    w_o = b.ext("w_o", (d, d))
    w_up = b.ext("w_up", (d, MLP_EXPANSION * d))
    w_down = b.ext("w_down", (MLP_EXPANSION * d, d))
    o = _gemm(b, "out_proj", mixed, w_o, ["o"])
    h1 = _ew(b, "residual1", "add", [o, x], "h1")
    h1n = _ew(b, "norm2", "norm", [h1], "h1n")
    u = _gemm(b, "mlp_up", h1n, w_up, ["u"])
    a = _ew(b, "act", "gelu", [u], "a")
    m = _gemm(b, "mlp_down", a, w_down, ["m"])
    return _ew(b, "residual2", "add", [m, h1], "y")


def build_attention_decoder(L: int, d: int) -> DataflowGraph:
    if L < 1 or d < 1:
        raise ValueError("L and d must be >= 1")
    b = _Builder(f"attention_L{L}_d{d}")
    x = b.ext("x", (L, d))
    w_qkv = b.ext("w_qkv", (d, 3 * d))
    xn = _ew(b, "norm1", "norm", [x], "xn")
    q, k, v = _gemm(b, "qkv_proj", xn, w_qkv, ["q", "k", "v"])
    s = b.add("qk", Gemm(L, L, d), [q, k], [TensorDesc("scores", (L, L))])
    p = _ew(b, "softmax", "softmax", [s], "probs", ops=5)
    att = b.add("av", Gemm(L, d, L), [p, v], [TensorDesc("attn", (L, d))])
    y = _tail(b, att, x, L, d)
    return b.build([y])


def build_hyena_decoder(L: int, d: int, R: int = 32,
                        variant: FftVariant = FftVariant.VECTOR,
                        pad: bool = True) -> DataflowGraph:
    """Hyena decoder; ``pad`` selects 2L-point (linear) vs L-point (circular) FFTs."""
    n = 2 * L if pad else L
    FftPlan(n, R, variant).check()
    b = _Builder(f"hyena_{variant.value}_L{L}_d{d}_R{R}")
    x = b.ext("x", (L, d))
    h = b.ext("filter", (L, d))
    w_in = b.ext("w_in", (d, 3 * d))
    xn = _ew(b, "norm1", "norm", [x], "xn")
    q, k, v = _gemm(b, "in_proj", xn, w_in, ["q", "k", "v"])
    qv = _ew(b, "gate1", "mul", [q, v], "qv")
    fwd = FftPlan(n, R, variant, Direction.FORWARD)
    inv = FftPlan(n, R, variant, Direction.INVERSE)
    u_f = b.add("fft_u", Fft(fwd, d), [qv], [TensorDesc("u_f", (n, d), COMPLEX_FP16)])
    h_f = b.add("fft_k", Fft(fwd, d), [h], [TensorDesc("h_f", (n, d), COMPLEX_FP16)])
    y_f = _ew(b, "freq_mul", "cmul", [u_f, h_f], "y_f", ops=6, element_bytes=COMPLEX_FP16)
    y_t = b.add("ifft", Fft(inv, d), [y_f], [TensorDesc("y_t", (L, d))])
    mixed = _ew(b, "gate2", "mul", [k, y_t], "yk")
    y = _tail(b, mixed, x, L, d)
    return b.build([y])


def build_mamba_decoder(L: int, d: int, scan_variant: ScanVariant = ScanVariant.B_SCAN,
                        R: int = 32) -> DataflowGraph:
    desc = ScanDesc(L, scan_variant, R).check()
    b = _Builder(f"mamba_{scan_variant.value}_L{L}_d{d}")
    x = b.ext("x", (L, d))
    w_in = b.ext("w_in", (d, 2 * d))
    xn = _ew(b, "norm1", "norm", [x], "xn")
    xs, z = _gemm(b, "in_proj", xn, w_in, ["xs", "z"])
    xd = _ew(b, "discretize", "discretize", [xs], "xd", ops=6)
    hs = b.add("scan", Scan(desc, d), [xd], [TensorDesc("hs", (L, d))])
    g = _ew(b, "gate", "mul", [hs, z], "g")
    y = _tail(b, g, x, L, d)
    return b.build([y])


DECODERS = ("attention", "hyena-vector", "hyena-gemm", "mamba-c", "mamba-hs", "mamba-b")


def build_decoder(name: str, L: int, d: int = 32, R: int = 32) -> DataflowGraph:
    if name == "attention":
        return build_attention_decoder(L, d)
    if name == "hyena-vector":
        return build_hyena_decoder(L, d, R, FftVariant.VECTOR)
    if name == "hyena-gemm":
        return build_hyena_decoder(L, d, R, FftVariant.GEMM)
    scans = {"mamba-c": ScanVariant.C_SCAN, "mamba-hs": ScanVariant.HS_SCAN,
             "mamba-b": ScanVariant.B_SCAN}
    if name in scans:
        return build_mamba_decoder(L, d, scans[name], R)
    raise KeyError(f"unknown decoder {name!r}; expected one of {DECODERS}")


# --------------------------------------------------------------------------
# FLOP accounting
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GraphWork:
    per_kernel: dict
    by_kind: dict
    total: WorkCount = field(default=ZERO_WORK)


def graph_flops(g: DataflowGraph) -> GraphWork:
    per_kernel = {k.id: work_count(k) for k in g.kernels}
    by_kind: dict[str, WorkCount] = {}
    total = ZERO_WORK
    for k in g.kernels:
        w = per_kernel[k.id]
        by_kind[k.kind_name] = by_kind.get(k.kind_name, ZERO_WORK) + w
        total = total + w
    return GraphWork(per_kernel, by_kind, total)
