"""Minimal dense feed-forward networks with analytic backpropagation.

Rectifier hidden layers; tanh output head for actors, identity for critics.
Everything runs in float64 on plain numpy arrays, which keeps gradient
checks crisp at these tiny sizes. Includes soft target updates, SGD and
Adam, and a self-describing JSON checkpoint format.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Mlp",
    "GradientSet",
    "AdamState",
    "mlp_init",
    "forward",
    "forward_cached",
    "backward",
    "soft_update",
    "sgd_step",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_id",
]

CHECKPOINT_VERSION = 1


@dataclass
class Mlp:
    """Weights/biases of one feed-forward net; weights[i] has shape (in, out)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    output_activation: str = "linear"  # "linear" | "tanh"

    def __post_init__(self):
        if self.output_activation not in ("linear", "tanh"):
            raise ValueError(f"unknown output activation: {self.output_activation}")
        for k in range(len(self.weights) - 1):
            if self.weights[k].shape[1] != self.weights[k + 1].shape[0]:
                raise ValueError("layer dimensions do not chain")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[1],):
                raise ValueError("bias shape mismatch")

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "Mlp":
        return Mlp(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.output_activation,
        )


@dataclass
class GradientSet:
    """Per-parameter gradients, shape-congruent with an Mlp."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


def mlp_init(
    dims: list[int],
    output_activation: str,
    rng: np.random.Generator,
    final_bound: float | None = None,
) -> Mlp:
    """Uniform fan-in init; ``final_bound`` overrides the last layer's range
    (used to start actor outputs near zero)."""
    weights, biases = [], []
    for k in range(len(dims) - 1):
        fan_in, fan_out = dims[k], dims[k + 1]
        bound = 1.0 / np.sqrt(fan_in)
        if final_bound is not None and k == len(dims) - 2:
            bound = final_bound
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return Mlp(weights, biases, output_activation)


def _apply_head(net: Mlp, z: np.ndarray) -> np.ndarray:
    return np.tanh(z) if net.output_activation == "tanh" else z


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Evaluate the net on a vector (1-D) or batch (2-D); pure function."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != net.dims[0]:
        raise ValueError(f"input dim {h.shape[1]} != net input {net.dims[0]}")
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if k < last:
            h = np.maximum(h, 0.0)
        else:
            h = _apply_head(net, h)
    return h[0] if single else h


def forward_cached(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Batch forward keeping each layer's input activation for backward."""
    h = np.asarray(x, dtype=float)
    if h.ndim != 2 or h.shape[1] != net.dims[0]:
        raise ValueError("forward_cached expects a (batch, in_dim) array")
    acts = [h]
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        h = np.maximum(h, 0.0) if k < last else _apply_head(net, h)
        acts.append(h)
    return acts[-1], acts


def backward(
    net: Mlp, acts: list[np.ndarray], upstream: np.ndarray
) -> tuple[GradientSet, np.ndarray]:
    """Reverse-mode gradients of sum(upstream * output) w.r.t. parameters and input.

    ``acts`` comes from forward_cached; ``upstream`` is dL/dy of shape
    (batch, out). Parameter gradients are summed over the batch; the
    returned input gradient is per-sample (batch, in).
    """
    delta = np.asarray(upstream, dtype=float)
    if delta.shape != acts[-1].shape:
        raise ValueError("upstream shape mismatch")
    if net.output_activation == "tanh":
        delta = delta * (1.0 - acts[-1] ** 2)
    gw = [np.empty(0)] * len(net.weights)
    gb = [np.empty(0)] * len(net.biases)
    for k in range(len(net.weights) - 1, -1, -1):
        gw[k] = acts[k].T @ delta
        gb[k] = delta.sum(axis=0)
        delta = delta @ net.weights[k].T
        if k > 0:
            delta = delta * (acts[k] > 0.0)
    return GradientSet(gw, gb), delta


def soft_update(target: Mlp, main: Mlp, tau: float) -> Mlp:
    """theta' <- tau*theta + (1 - tau)*theta', element-wise; returns a new net."""
    if target.dims != main.dims:
        raise ValueError("shape mismatch between target and main nets")
    w = [tau * wm + (1.0 - tau) * wt for wm, wt in zip(main.weights, target.weights)]
    b = [tau * bm + (1.0 - tau) * bt for bm, bt in zip(main.biases, target.biases)]
    return Mlp(w, b, target.output_activation)


def soft_update_inplace(target: Mlp, main: Mlp, tau: float) -> None:
    """In-place variant for the training hot loop; same arithmetic."""
    keep = 1.0 - tau
    for wt, wm in zip(target.weights, main.weights):
        wt *= keep
        wt += tau * wm
    for bt, bm in zip(target.biases, main.biases):
        bt *= keep
        bt += tau * bm


def sgd_step(net: Mlp, grads: GradientSet, lr: float) -> None:
    """Plain gradient-descent update, in place."""
    for w, gw in zip(net.weights, grads.weights):
        w -= lr * gw
    for b, gb in zip(net.biases, grads.biases):
        b -= lr * gb


@dataclass
class AdamState:
    """First/second moment accumulators mirroring an Mlp's parameters."""

    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net: Mlp) -> "AdamState":
        return cls(
            m_w=[np.zeros_like(w) for w in net.weights],
            v_w=[np.zeros_like(w) for w in net.weights],
            m_b=[np.zeros_like(b) for b in net.biases],
            v_b=[np.zeros_like(b) for b in net.biases],
        )


def adam_step(net: Mlp, grads: GradientSet, state: AdamState, lr: float) -> None:
    """One Adam update, in place; bias-corrected moments."""
    state.t += 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for w, g, m, v in zip(net.weights, grads.weights, state.m_w, state.v_w):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        w -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    for b, g, m, v in zip(net.biases, grads.biases, state.m_b, state.v_b):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        b -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# --- checkpointing ---------------------------------------------------------


def _net_to_doc(net: Mlp) -> dict:
    return {
        "dims": net.dims,
        "output_activation": net.output_activation,
        "weights": [w.ravel().tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def _net_from_doc(doc: dict) -> Mlp:
    dims = doc["dims"]
    weights = [
        np.asarray(flat, dtype=float).reshape(dims[k], dims[k + 1])
        for k, flat in enumerate(doc["weights"])
    ]
    biases = [np.asarray(b, dtype=float) for b in doc["biases"]]
    return Mlp(weights, biases, doc["output_activation"])


def _adam_to_doc(state: AdamState) -> dict:
    return {
        "t": state.t,
        "beta1": state.beta1,
        "beta2": state.beta2,
        "eps": state.eps,
        "m_w": [a.ravel().tolist() for a in state.m_w],
        "v_w": [a.ravel().tolist() for a in state.v_w],
        "m_b": [a.tolist() for a in state.m_b],
        "v_b": [a.tolist() for a in state.v_b],
    }


def _adam_from_doc(doc: dict, net: Mlp) -> AdamState:
    state = AdamState.for_net(net)
    state.t = doc["t"]
    state.beta1, state.beta2, state.eps = doc["beta1"], doc["beta2"], doc["eps"]
    for dst, flat in zip(state.m_w, doc["m_w"]):
        dst[:] = np.asarray(flat, dtype=float).reshape(dst.shape)
    for dst, flat in zip(state.v_w, doc["v_w"]):
        dst[:] = np.asarray(flat, dtype=float).reshape(dst.shape)
    for dst, flat in zip(state.m_b, doc["m_b"]):
        dst[:] = np.asarray(flat, dtype=float)
    for dst, flat in zip(state.v_b, doc["v_b"]):
        dst[:] = np.asarray(flat, dtype=float)
    return state


def save_checkpoint(
    path,
    nets: dict[str, Mlp],
    metadata: dict | None = None,
    optimizers: dict[str, AdamState] | None = None,
) -> None:
    """Write a versioned, self-describing JSON checkpoint.

    ``metadata`` should carry the agent parameters and normalization
    constants the policy was trained with.
    """
    doc = {
        "version": CHECKPOINT_VERSION,
        "nets": {name: _net_to_doc(net) for name, net in nets.items()},
        "metadata": metadata or {},
    }
    if optimizers:
        doc["optimizers"] = {name: _adam_to_doc(st) for name, st in optimizers.items()}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> tuple[dict[str, Mlp], dict, dict[str, AdamState]]:
    """Read a checkpoint; returns (nets, metadata, optimizer states)."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {doc.get('version')!r}")
    nets = {name: _net_from_doc(d) for name, d in doc["nets"].items()}
    optimizers = {
        name: _adam_from_doc(d, nets[name])
        for name, d in doc.get("optimizers", {}).items()
        if name in nets
    }
    return nets, doc.get("metadata", {}), optimizers


def checkpoint_id(path) -> str:
    """Short content hash used to record checkpoint provenance in reports."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()[:12]
