"""Layers and optimization on top of the autodiff engine.

Dense stacks, a gated recurrent (LSTM) cell, a masked bidirectional scan,
bias-corrected Adam, and the JSON checkpoint format.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, concat, matmul, sigmoid, stack, tanh

CHECKPOINT_FORMAT_VERSION = 1


def init_weight(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), the scheme used everywhere here."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass
class Dense:
    """Two-layer perceptron with tanh hidden activation (no output activation)."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @staticmethod
    def create(rng: np.random.Generator, n_in: int, n_hidden: int, n_out: int) -> "Dense":
        return Dense(
            w1=Tensor(init_weight(rng, n_in, n_hidden)),
            b1=Tensor(np.zeros(n_hidden)),
            w2=Tensor(init_weight(rng, n_hidden, n_out)),
            b2=Tensor(np.zeros(n_out)),
        )

    def __call__(self, x: Tensor) -> Tensor:
        h = tanh(matmul(x, self.w1) + self.b1)
        return matmul(h, self.w2) + self.b2

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w1": self.w1, f"{prefix}.b1": self.b1,
                f"{prefix}.w2": self.w2, f"{prefix}.b2": self.b2}


@dataclass
class RecurrentCell:
    """Gated recurrent cell (input/forget/output gates + tanh candidate).

    Gate pre-activations are computed as one fused affine map
    x @ w_x + h @ w_h + b, split into [input, forget, output, candidate].
    """

    w_x: Tensor
    w_h: Tensor
    b: Tensor
    hidden_dim: int

    @staticmethod
    def create(rng: np.random.Generator, input_dim: int, hidden_dim: int) -> "RecurrentCell":
        return RecurrentCell(
            w_x=Tensor(init_weight(rng, input_dim, 4 * hidden_dim)),
            w_h=Tensor(init_weight(rng, hidden_dim, 4 * hidden_dim)),
            b=Tensor(np.zeros(4 * hidden_dim)),
            hidden_dim=hidden_dim,
        )

    def step(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        """One recurrent update; returns (h', c'). Batch-shaped (B, dim)."""
        n = self.hidden_dim
        z = matmul(x, self.w_x) + matmul(h, self.w_h) + self.b
        gi = sigmoid(z[..., 0 * n : 1 * n])
        gf = sigmoid(z[..., 1 * n : 2 * n])
        go = sigmoid(z[..., 2 * n : 3 * n])
        cand = tanh(z[..., 3 * n : 4 * n])
        c_next = gf * c + gi * cand
        h_next = go * tanh(c_next)
        return h_next, c_next

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w_x": self.w_x, f"{prefix}.w_h": self.w_h, f"{prefix}.b": self.b}


def bidirectional_scan(
    fwd: RecurrentCell,
    bwd: RecurrentCell,
    inputs: list[Tensor],
    masks: list[np.ndarray] | None = None,
) -> list[Tensor]:
    """Run two directional cells over ``inputs`` and sum their hidden states.

    inputs[i] has shape (B, n). ``masks``, when given, holds constant (B, 1)
    arrays in {0,1}: a masked-out element does not update the running state
    (it is skipped, as if absent from the sequence) and its output is the
    state the cell would have produced had it participated - callers zero
    out non-participant outputs themselves.
    """
    if not inputs:
        raise ValueError("bidirectional_scan needs a nonempty sequence")
    n = len(inputs)

    def directional(cell: RecurrentCell, order: range) -> dict[int, Tensor]:
        batch = inputs[0].value.shape[:-1]
        h = Tensor(np.zeros(batch + (cell.hidden_dim,)))
        c = Tensor(np.zeros(batch + (cell.hidden_dim,)))
        outs: dict[int, Tensor] = {}
        for i in order:
            h_new, c_new = cell.step(inputs[i], h, c)
            outs[i] = h_new
            if masks is None:
                h, c = h_new, c_new
            else:
                m = Tensor(masks[i])
                keep = Tensor(1.0 - masks[i])
                h = m * h_new + keep * h
                c = m * c_new + keep * c
        return outs

    f_out = directional(fwd, range(n))
    b_out = directional(bwd, range(n - 1, -1, -1))
    return [f_out[i] + b_out[i] for i in range(n)]


@dataclass
class Adam:
    """Bias-corrected Adam over a fixed, ordered set of named parameters."""

    params: dict[str, Tensor]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for name, p in self.params.items():
            self.m[name] = np.zeros_like(p.value)
            self.v[name] = np.zeros_like(p.value)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        """Descend along stored gradients (minimization convention)."""
        self.step_count += 1
        t = self.step_count
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / (1 - self.beta1 ** t)
            v_hat = self.v[name] / (1 - self.beta2 ** t)
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# -- checkpoints ----------------------------------------------------------


def _encode_array(a: np.ndarray) -> dict:
    data = np.ascontiguousarray(a, dtype="<f8").tobytes()
    return {"shape": list(a.shape), "data": base64.b64encode(data).decode("ascii")}


def _decode_array(block: dict) -> np.ndarray:
    raw = base64.b64decode(block["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(block["shape"]).copy()


def save_checkpoint(path: str | Path, params: dict[str, Tensor], dims: dict) -> None:
    """JSON envelope: format_version, dims, named blocks of base64 little-endian f64."""
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "dims": dims,
        "params": {name: _encode_array(p.value) for name, p in sorted(params.items())},
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> tuple[dict[str, Tensor], dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format: {doc.get('format_version')}")
    params = {name: Tensor(_decode_array(block)) for name, block in doc["params"].items()}
    return params, doc["dims"]
