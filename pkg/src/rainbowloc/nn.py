"""Minimal reverse-mode neural network core.

Just enough machinery for the localization networks: 1-D convolution, dense
layers, relu/tanh activations, MSE loss, and Adam.  Forward passes run on
batched float64 tensors of shape (B, C, L); convolutions lower to a single
GEMM per layer via strided column extraction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "conv1d" | "dense" | "activation"
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    in_dim: int = 0
    out_dim: int = 0
    activation: str = ""

    def __post_init__(self):
        if self.kind == "conv1d":
            if min(self.in_channels, self.out_channels, self.kernel) < 1:
                raise ValueError("conv1d dims must be positive")
            if self.stride < 1 or self.padding < 0:
                raise ValueError("conv1d stride/padding out of range")
        elif self.kind == "dense":
            if min(self.in_dim, self.out_dim) < 1:
                raise ValueError("dense dims must be positive")
        elif self.kind == "activation":
            if self.activation not in ("relu", "tanh"):
                raise ValueError(f"unknown activation {self.activation!r}")
        else:
            raise ValueError(f"unknown layer kind {self.kind!r}")


def conv1d(in_channels, out_channels, kernel, stride=1, padding=0) -> LayerSpec:
    return LayerSpec(
        kind="conv1d", in_channels=in_channels, out_channels=out_channels,
        kernel=kernel, stride=stride, padding=padding,
    )


def dense(in_dim, out_dim) -> LayerSpec:
    return LayerSpec(kind="dense", in_dim=in_dim, out_dim=out_dim)


def activation(name) -> LayerSpec:
    return LayerSpec(kind="activation", activation=name)


def conv_output_length(length: int, kernel: int, stride: int, padding: int) -> int:
    out = (length + 2 * padding - kernel) // stride + 1
    if out < 1:
        raise ValueError(f"conv output length {out} for input {length}")
    return out


def validate_specs(specs: list[LayerSpec], input_len: int, input_channels: int = 1) -> int:
    """Shape-check a layer stack against an input length; returns output dim."""
    channels, length, flat = input_channels, input_len, None
    for spec in specs:
        if spec.kind == "conv1d":
            if flat is not None:
                raise ValueError("conv1d after dense is not supported")
            if spec.in_channels != channels:
                raise ValueError(f"conv1d expects {spec.in_channels} channels, has {channels}")
            length = conv_output_length(length, spec.kernel, spec.stride, spec.padding)
            channels = spec.out_channels
        elif spec.kind == "dense":
            incoming = flat if flat is not None else channels * length
            if spec.in_dim != incoming:
                raise ValueError(f"dense expects {spec.in_dim} inputs, has {incoming}")
            flat = spec.out_dim
    return flat if flat is not None else channels * length


@dataclass
class ModelParams:
    """Ordered per-layer parameter blocks; activations own no parameters."""

    blocks: list[list[np.ndarray]]
    seed: int

    def copy(self) -> "ModelParams":
        return ModelParams([[a.copy() for a in blk] for blk in self.blocks], self.seed)

    def flat(self) -> list[np.ndarray]:
        return [a for blk in self.blocks for a in blk]


def init_network(specs: list[LayerSpec], seed: int) -> ModelParams:
    """Uniform fan-in initialization (bound sqrt(1/fan_in)); biases zero."""
    rng = np.random.default_rng([int(seed), 7])
    blocks: list[list[np.ndarray]] = []
    for spec in specs:
        if spec.kind == "conv1d":
            fan_in = spec.in_channels * spec.kernel
            bound = (1.0 / fan_in) ** 0.5
            w = rng.uniform(-bound, bound, size=(spec.out_channels, spec.in_channels, spec.kernel))
            blocks.append([w, np.zeros(spec.out_channels)])
        elif spec.kind == "dense":
            bound = (1.0 / spec.in_dim) ** 0.5
            w = rng.uniform(-bound, bound, size=(spec.out_dim, spec.in_dim))
            blocks.append([w, np.zeros(spec.out_dim)])
        else:
            blocks.append([])
    return ModelParams(blocks=blocks, seed=int(seed))


def _conv_columns(x: np.ndarray, kernel: int, stride: int, padding: int):
    """Extract convolution columns: (B, C, L) -> contiguous (B*Lout, C*K)."""
    b, c, length = x.shape
    if padding:
        xp = np.zeros((b, c, length + 2 * padding))
        xp[:, :, padding : padding + length] = x
    else:
        xp = x
    lout = conv_output_length(length, kernel, stride, padding)
    s0, s1, s2 = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, shape=(b, lout, c, kernel), strides=(s0, s2 * stride, s1, s2), writeable=False
    )
    cols = np.ascontiguousarray(view).reshape(b * lout, c * kernel)
    return cols, lout, xp.shape


def forward(params: ModelParams, specs: list[LayerSpec], x: np.ndarray):
    """Run the stack on a (B, C, L) batch; returns (output, cache).

    Accepts (L,) or (C, L) single samples, promoted to a batch of one.
    Dense layers flatten (B, C, L) inputs automatically.
    """
    x = np.asarray(x, dtype=float)
    orig_shape = x.shape
    first_kind = specs[0].kind if specs else "dense"
    if x.ndim == 1:
        x = x[None, None, :] if first_kind == "conv1d" else x[None, :]
    elif x.ndim == 2 and first_kind == "conv1d":
        x = x[None]  # single (C, L) sample; batches are passed 3-D
    added = x.ndim - len(orig_shape)
    cache: list[tuple] = []
    h: np.ndarray = x
    for spec, blk in zip(specs, params.blocks):
        if spec.kind == "conv1d":
            if h.ndim != 3 or h.shape[1] != spec.in_channels:
                raise ValueError(f"conv1d input shape {h.shape} incompatible with spec")
            w, bias = blk
            cols, lout, padded_shape = _conv_columns(h, spec.kernel, spec.stride, spec.padding)
            w2 = w.reshape(spec.out_channels, -1)
            out2 = cols @ w2.T
            out2 += bias
            out = out2.reshape(h.shape[0], lout, spec.out_channels).transpose(0, 2, 1)
            cache.append(("conv1d", cols, padded_shape, h.shape))
            h = out
        elif spec.kind == "dense":
            w, bias = blk
            shape_in = h.shape
            flat = h.reshape(h.shape[0], -1)
            if flat.shape[1] != spec.in_dim:
                raise ValueError(f"dense input {flat.shape[1]} != spec in_dim {spec.in_dim}")
            cache.append(("dense", flat, shape_in))
            h = flat @ w.T + bias
        else:
            if spec.activation == "relu":
                h = np.maximum(h, 0.0)
            else:
                h = np.tanh(h)
            cache.append(("activation", h))
    out = h
    for _ in range(added):
        if out.ndim > 0 and out.shape[0] == 1:
            out = out[0]
    return out, (cache, h.shape, orig_shape)


def backward(params: ModelParams, specs: list[LayerSpec], cache, grad_output: np.ndarray):
    """Exact reverse-mode gradients of the cached forward.

    Returns (grads, grad_input) where grads mirrors params.blocks.
    """
    steps, out_shape, orig_shape = cache
    if len(steps) != len(specs):
        raise ValueError("cache does not match the layer stack")
    g = np.asarray(grad_output, dtype=float)
    if g.size != int(np.prod(out_shape)):
        raise ValueError(f"grad_output shape {g.shape} does not match output {out_shape}")
    g = g.reshape(out_shape)
    grads: list[list[np.ndarray]] = [[] for _ in specs]
    for i in range(len(specs) - 1, -1, -1):
        spec, step = specs[i], steps[i]
        if spec.kind == "conv1d":
            w, _ = params.blocks[i]
            _, cols, padded_shape, in_shape = step
            b, _, _ = in_shape
            lout = g.shape[2]
            g2 = g.transpose(0, 2, 1).reshape(b * lout, spec.out_channels)
            w2 = w.reshape(spec.out_channels, -1)
            dw = (g2.T @ cols).reshape(w.shape)
            db = g2.sum(axis=0)
            dcols = (g2 @ w2).reshape(b, lout, spec.in_channels, spec.kernel)
            dxp = np.zeros(padded_shape)
            for k in range(spec.kernel):
                dxp[:, :, k : k + spec.stride * lout : spec.stride] += dcols[
                    :, :, :, k
                ].transpose(0, 2, 1)
            pad = spec.padding
            dx = dxp[:, :, pad : pad + in_shape[2]] if pad else dxp
            grads[i] = [dw, db]
            g = dx
        elif spec.kind == "dense":
            w, _ = params.blocks[i]
            _, flat, shape_in = step
            dw = g.T @ flat
            db = g.sum(axis=0)
            grads[i] = [dw, db]
            g = (g @ w).reshape(shape_in)
        else:
            out = step[1]
            if spec.activation == "relu":
                g = g * (out > 0.0)
            else:
                g = g * (1.0 - out * out)
            grads[i] = []
    return grads, g.reshape(orig_shape)


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error and its gradient w.r.t. pred.

    For batched (B, n) inputs the loss is the mean over samples of the
    per-sample mean over coordinates.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError("pred and target shapes differ")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    grad = 2.0 * diff / diff.size
    return loss, grad


@dataclass
class AdamState:
    """First/second moment accumulators matching a parameter list."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init_like(cls, arrays: list[np.ndarray], **kwargs) -> "AdamState":
        return cls(
            m=[np.zeros_like(a) for a in arrays],
            v=[np.zeros_like(a) for a in arrays],
            **kwargs,
        )


def adam_step(arrays: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float):
    """One in-place Adam update with bias correction over parallel lists."""
    if len(arrays) != len(grads) or len(arrays) != len(state.m):
        raise ValueError("parameter, gradient and state lists must align")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        if a.shape != g.shape:
            raise ValueError("gradient shape mismatch")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        a -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return arrays, state
