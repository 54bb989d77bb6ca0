"""Minimal dense-network machinery: MLPs, reverse-mode gradients, Adam, soft updates.

One fixed architecture family (affine -> ReLU -> ... -> affine) covers every
actor and critic in this package, so the backward pass is written out by hand
and verified against finite differences instead of pulling in an autodiff
framework.  Everything is float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Mlp:
    """Fully-connected ReLU network; weights[l] has shape (in_l, out_l)."""

    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def params(self) -> list[np.ndarray]:
        """Flat parameter list in documented order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            sizes=self.sizes,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def mlp_init(sizes, rng: np.random.Generator, final_zero: bool = False) -> Mlp:
    """Uniform fan-in init (+-1/sqrt(fan_in)); final layer optionally zeroed.

    Zeroing the final layer makes tanh/linear heads start at exactly zero
    output, which in residual mode means the initial policy reproduces the
    uncorrected baseline pulse.
    """
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    weights, biases = [], []
    for l in range(len(sizes) - 1):
        fan_in = sizes[l]
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(sizes[l], sizes[l + 1]))
        b = rng.uniform(-bound, bound, size=sizes[l + 1])
        if final_zero and l == len(sizes) - 2:
            w[:] = 0.0
            b[:] = 0.0
        weights.append(w)
        biases.append(b)
    return Mlp(sizes=sizes, weights=weights, biases=biases)


def mlp_forward(mlp: Mlp, x: np.ndarray):
    """Forward pass; returns (output, cache) with cache feeding mlp_backward.

    Accepts a single vector or a (B, in) batch; output shape follows input.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    inputs = [h]
    n_layers = len(mlp.weights)
    for l in range(n_layers - 1):
        z = h @ mlp.weights[l] + mlp.biases[l]
        h = np.maximum(z, 0.0)
        inputs.append(h)
    y = h @ mlp.weights[-1] + mlp.biases[-1]
    cache = (inputs, single)
    return (y[0] if single else y), cache


def mlp_backward(mlp: Mlp, cache, output_gradient: np.ndarray):
    """Exact reverse-mode gradients.

    Returns (param_grads, input_grad) where param_grads matches Mlp.params()
    order and input_grad is d(loss)/d(input).  The ReLU subgradient at 0 is 0.
    """
    inputs, single = cache
    gy = np.asarray(output_gradient, dtype=float)
    if single:
        gy = gy[None, :]
    w_grads = [None] * len(mlp.weights)
    b_grads = [None] * len(mlp.biases)
    g = gy
    for l in range(len(mlp.weights) - 1, -1, -1):
        w_grads[l] = inputs[l].T @ g
        b_grads[l] = g.sum(axis=0)
        g = g @ mlp.weights[l].T
        if l > 0:
            g = g * (inputs[l] > 0.0)
    grads = []
    for wg, bg in zip(w_grads, b_grads):
        grads.append(wg)
        grads.append(bg)
    return grads, (g[0] if single else g)


@dataclass
class AdamState:
    """Bias-corrected Adam moments for one parameter list."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_init(params: list[np.ndarray], lr: float = 3e-4) -> AdamState:
    return AdamState(
        lr=lr,
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
    )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState):
    """In-place descent step; pass the gradient of the loss being minimized."""
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ValueError("parameter/gradient/state length mismatch")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def soft_update(target: Mlp, online: Mlp, tau: float):
    """In-place Polyak blend: theta_target <- tau * theta_online + (1 - tau) * theta_target."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    for pt, po in zip(target.params(), online.params()):
        pt *= 1.0 - tau
        pt += tau * po


# ---------------------------------------------------------------------------
# Checkpoint serialization: a JSON manifest plus one flat little-endian
# float64 blob.  Arrays are laid out in the order listed in the manifest,
# each row-major.

class CheckpointError(RuntimeError):
    """Malformed or truncated checkpoint data."""


def arrays_to_bytes(arrays: list[np.ndarray]) -> bytes:
    flat = [np.ascontiguousarray(a, dtype="<f8").ravel() for a in arrays]
    return np.concatenate(flat).tobytes() if flat else b""


def arrays_from_bytes(buf: bytes, shapes: list[tuple[int, ...]]) -> list[np.ndarray]:
    total = int(sum(np.prod(s, dtype=int) for s in shapes))
    expected = total * 8
    if len(buf) != expected:
        raise CheckpointError(
            f"parameter blob has {len(buf)} bytes, expected {expected}"
        )
    flat = np.frombuffer(buf, dtype="<f8").astype(float)
    out = []
    pos = 0
    for s in shapes:
        n = int(np.prod(s, dtype=int))
        out.append(flat[pos : pos + n].reshape(s).copy())
        pos += n
    return out


def mlp_shapes(sizes) -> list[tuple[int, ...]]:
    sizes = tuple(int(s) for s in sizes)
    shapes = []
    for l in range(len(sizes) - 1):
        shapes.append((sizes[l], sizes[l + 1]))
        shapes.append((sizes[l + 1],))
    return shapes


def mlp_from_arrays(sizes, arrays: list[np.ndarray]) -> Mlp:
    weights = arrays[0::2]
    biases = arrays[1::2]
    return Mlp(sizes=tuple(int(s) for s in sizes), weights=list(weights), biases=list(biases))


def save_array_bundle(path: Path, manifest: dict, named_arrays: dict[str, list[np.ndarray]]):
    """Write manifest.json + params.bin into directory `path`.

    manifest gains an 'arrays' index mapping each name to the shapes of its
    arrays; the blob concatenates the groups in the listed order.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    index = {}
    blob_parts = []
    # sorted by name so the blob layout matches the sort_keys JSON manifest
    for name in sorted(named_arrays):
        arrays = named_arrays[name]
        index[name] = [list(a.shape) for a in arrays]
        blob_parts.extend(arrays)
    manifest = dict(manifest)
    manifest["arrays"] = index
    (path / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    (path / "params.bin").write_bytes(arrays_to_bytes(blob_parts))


def load_array_bundle(path: Path) -> tuple[dict, dict[str, list[np.ndarray]]]:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError:
        raise CheckpointError(f"no manifest.json under {path}")
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"manifest.json is not valid JSON: {exc}")
    if "arrays" not in manifest:
        raise CheckpointError("manifest.json lacks the 'arrays' index")
    shapes = []
    for name, group in manifest["arrays"].items():
        shapes.extend(tuple(s) for s in group)
    try:
        buf = (path / "params.bin").read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"no params.bin under {path}")
    arrays = arrays_from_bytes(buf, shapes)
    named = {}
    pos = 0
    for name, group in manifest["arrays"].items():
        named[name] = arrays[pos : pos + len(group)]
        pos += len(group)
    return manifest, named
