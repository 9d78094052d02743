"""Minimal GNN backbones with hand-derived gradients.

Two fixed architectures (a two-layer graph convolution and a generalized
PageRank propagation model) with forward passes, masked cross-entropy, and
analytic gradients with respect to the weights *and* every raw adjacency
entry.  The adjacency gradient flows through the degree normalization, which
is what the adversarial inner loop ascends on.  No autodiff engine: the two
backward passes are written out explicitly.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import NumericError

__all__ = [
    "GcnParams",
    "GprgnnParams",
    "LossBundle",
    "init_params",
    "normalize_adjacency",
    "gcn_forward",
    "gprgnn_forward",
    "model_forward",
    "masked_cross_entropy",
    "loss_and_grads",
    "softmax",
    "accuracy",
    "step_params",
    "params_hash",
    "save_params",
    "load_params",
]


@dataclass
class GcnParams:
    """Two-layer graph convolution weights (d x h and h x C)."""

    w1: np.ndarray
    w2: np.ndarray

    def arrays(self):
        return [("w1", self.w1), ("w2", self.w2)]


@dataclass
class GprgnnParams:
    """Two-layer MLP weights plus learnable propagation coefficients."""

    mlp_w1: np.ndarray
    mlp_w2: np.ndarray
    gpr_coeffs: np.ndarray

    @property
    def hops(self) -> int:
        return self.gpr_coeffs.size - 1

    def arrays(self):
        return [
            ("mlp_w1", self.mlp_w1),
            ("mlp_w2", self.mlp_w2),
            ("gpr_coeffs", self.gpr_coeffs),
        ]


@dataclass
class LossBundle:
    """Loss value with gradients for the parameters and the raw adjacency."""

    loss: float
    grad_params: GcnParams | GprgnnParams
    grad_adjacency: np.ndarray


def init_params(model: str, d: int, num_classes: int, rng: np.random.Generator,
                hidden: int = 64, hops: int = 10, teleport: float = 0.1):
    """Fresh Glorot-scaled parameters for "gcn" or "gprgnn".

    GPR coefficients start at the personalized-PageRank decay
    ``teleport * (1 - teleport)**k`` and are trained like any other weight.
    """
    def glorot(fan_in, fan_out):
        scale = np.sqrt(2.0 / (fan_in + fan_out))
        return rng.standard_normal((fan_in, fan_out)) * scale

    if model == "gcn":
        return GcnParams(w1=glorot(d, hidden), w2=glorot(hidden, num_classes))
    if model == "gprgnn":
        coeffs = teleport * (1.0 - teleport) ** np.arange(hops + 1)
        return GprgnnParams(
            mlp_w1=glorot(d, hidden),
            mlp_w2=glorot(hidden, num_classes),
            gpr_coeffs=coeffs,
        )
    raise ValueError(f"unknown model {model!r}, expected 'gcn' or 'gprgnn'")


def normalize_adjacency(a: np.ndarray) -> np.ndarray:
    """Self-loop renormalization D^{-1/2} (A + I) D^{-1/2}."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency must be square, got {a.shape}")
    if a.size and a.min() < 0:
        raise ValueError("adjacency entries must be nonnegative")
    s = a + np.eye(a.shape[0])
    d_inv_sqrt = 1.0 / np.sqrt(s.sum(axis=1))
    return s * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


def _relu(x):
    return np.maximum(x, 0.0)


def gcn_forward(params: GcnParams, a_norm: np.ndarray, x: np.ndarray) -> np.ndarray:
    """logits = A_hat relu(A_hat X W1) W2."""
    return a_norm @ _relu(a_norm @ (x @ params.w1)) @ params.w2


def gprgnn_forward(params: GprgnnParams, a_norm: np.ndarray, x: np.ndarray) -> np.ndarray:
    """logits = sum_k gamma_k A_hat^k mlp(X), accumulated iteratively."""
    h0 = _relu(x @ params.mlp_w1) @ params.mlp_w2
    out = params.gpr_coeffs[0] * h0
    z = h0
    for k in range(1, params.gpr_coeffs.size):
        z = a_norm @ z
        out = out + params.gpr_coeffs[k] * z
    return out


def model_forward(params, a_norm: np.ndarray, x: np.ndarray) -> np.ndarray:
    if isinstance(params, GcnParams):
        return gcn_forward(params, a_norm, x)
    if isinstance(params, GprgnnParams):
        return gprgnn_forward(params, a_norm, x)
    raise ValueError(f"unsupported parameter type {type(params).__name__}")


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=1, keepdims=True)


def masked_cross_entropy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    """Mean negative log-likelihood over the masked nodes (max-stabilized)."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("mask selects no nodes")
    lm = logits[mask]
    lm = lm - lm.max(axis=1, keepdims=True)
    logz = np.log(np.exp(lm).sum(axis=1))
    picked = lm[np.arange(lm.shape[0]), labels[mask]]
    return float(np.mean(logz - picked))


def _ce_with_grad(logits, labels, mask):
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("mask selects no nodes")
    m = int(mask.sum())
    probs = softmax(logits[mask])
    rows = np.arange(m)
    with np.errstate(divide="ignore"):  # divergence is reported as NumericError
        loss = float(np.mean(-np.log(probs[rows, labels[mask]])))
    d_masked = probs.copy()
    d_masked[rows, labels[mask]] -= 1.0
    d_logits = np.zeros_like(logits)
    d_logits[mask] = d_masked / m
    return loss, d_logits


def _normalized_with_cache(a):
    s = a + np.eye(a.shape[0])
    deg = s.sum(axis=1)
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    p = s * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]
    return p, deg, d_inv_sqrt


def _grad_through_normalization(d_p, p, deg, d_inv_sqrt):
    # P_ij = S_ij / sqrt(d_i d_j) with d_i the row sums of S = A + I, so the
    # gradient w.r.t. S picks up direct plus two degree-coupling terms.
    gp = d_p * p
    row = gp.sum(axis=1) / deg
    col = gp.sum(axis=0) / deg
    return (
        d_p * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]
        - 0.5 * row[:, None]
        - 0.5 * col[None, :]
    )


def _check_finite(value, name):
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite values in {name}")


def loss_and_grads(params, a: np.ndarray, x: np.ndarray, labels: np.ndarray,
                   mask: np.ndarray) -> LossBundle:
    """Masked loss with analytic gradients for weights and adjacency entries.

    ``a`` is the raw (unnormalized) adjacency; the backward pass includes the
    chain rule through the degree normalization.  The adjacency gradient is
    returned symmetrized, matching symmetric ascent updates.
    """
    a = np.asarray(a, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if a.size and a.min() < 0:
        raise ValueError("adjacency entries must be nonnegative")
    _check_finite(a, "adjacency")
    p, deg, d_inv_sqrt = _normalized_with_cache(a)

    if isinstance(params, GcnParams):
        xw1 = x @ params.w1
        h_pre = p @ xw1
        h = _relu(h_pre)
        hw2 = h @ params.w2
        logits = p @ hw2
        loss, d_logits = _ce_with_grad(logits, labels, mask)
        _check_finite(loss, "loss")

        d_w2 = (p @ h).T @ d_logits
        d_h = (p.T @ d_logits) @ params.w2.T
        d_h_pre = d_h * (h_pre > 0)
        d_w1 = x.T @ (p.T @ d_h_pre)
        d_p = d_logits @ hw2.T + d_h_pre @ xw1.T
        grad_params = GcnParams(w1=d_w1, w2=d_w2)
    elif isinstance(params, GprgnnParams):
        m1 = x @ params.mlp_w1
        hr = _relu(m1)
        h0 = hr @ params.mlp_w2
        hops = params.hops
        zs = [h0]
        for _ in range(hops):
            zs.append(p @ zs[-1])
        logits = sum(params.gpr_coeffs[k] * zs[k] for k in range(hops + 1))
        loss, d_logits = _ce_with_grad(logits, labels, mask)
        _check_finite(loss, "loss")

        d_coeffs = np.array([float(np.sum(d_logits * zs[k])) for k in range(hops + 1)])
        d_p = np.zeros_like(p)
        gz = params.gpr_coeffs[hops] * d_logits
        for k in range(hops, 0, -1):
            d_p += gz @ zs[k - 1].T
            gz = params.gpr_coeffs[k - 1] * d_logits + p.T @ gz
        d_h0 = gz
        d_w2 = hr.T @ d_h0
        d_m1 = (d_h0 @ params.mlp_w2.T) * (m1 > 0)
        d_w1 = x.T @ d_m1
        grad_params = GprgnnParams(mlp_w1=d_w1, mlp_w2=d_w2, gpr_coeffs=d_coeffs)
    else:
        raise ValueError(f"unsupported parameter type {type(params).__name__}")

    d_s = _grad_through_normalization(d_p, p, deg, d_inv_sqrt)
    grad_adjacency = 0.5 * (d_s + d_s.T)
    for name, arr in grad_params.arrays():
        _check_finite(arr, f"grad {name}")
    _check_finite(grad_adjacency, "grad adjacency")
    return LossBundle(loss=loss, grad_params=grad_params, grad_adjacency=grad_adjacency)


def accuracy(params, a: np.ndarray, x: np.ndarray, labels: np.ndarray,
             mask: np.ndarray) -> float:
    """Fraction of masked nodes predicted correctly (argmax, first-max ties)."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("mask selects no nodes")
    logits = model_forward(params, normalize_adjacency(a), x)
    pred = np.argmax(logits[mask], axis=1)
    return float(np.mean(pred == labels[mask]))


def step_params(params, grads, lr: float, velocity=None, momentum: float = 0.0):
    """One descent step; returns (new_params, new_velocity)."""
    cls = type(params)
    values = {}
    new_velocity = {}
    vel = velocity or {}
    for (name, value), (_, grad) in zip(params.arrays(), grads.arrays()):
        if momentum > 0.0:
            buf = momentum * vel.get(name, np.zeros_like(value)) + grad
            new_velocity[name] = buf
            values[name] = value - lr * buf
        else:
            values[name] = value - lr * grad
    return cls(**values), new_velocity


def params_hash(params) -> str:
    """Short content hash identifying a parameter checkpoint."""
    h = hashlib.sha256()
    for name, arr in params.arrays():
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()[:12]


_MAGIC = b"GSEP"
_VERSION = 1
_MODEL_KIND = {GcnParams: "gcn", GprgnnParams: "gprgnn"}


def save_params(path, params, metadata: dict | None = None) -> None:
    """Write a checkpoint: flat binary tensors plus a JSON sidecar.

    Binary layout: magic "GSEP", u32 version, u32 tensor count, then per
    tensor a u16 name length, the UTF-8 name, u32 ndim and u64 dims; tensor
    data follows in the same order as little-endian float64.
    """
    kind = _MODEL_KIND.get(type(params))
    if kind is None:
        raise ValueError(f"unsupported parameter type {type(params).__name__}")
    arrays = params.arrays()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(arrays)))
        for name, arr in arrays:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            shape = np.atleast_1d(arr).shape
            fh.write(struct.pack("<I", len(shape)))
            fh.write(struct.pack(f"<{len(shape)}Q", *shape))
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    meta = {"model": kind, "checksum": params_hash(params)}
    meta.update(metadata or {})
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_params(path):
    """Read a checkpoint written by :func:`save_params`; returns (params, metadata)."""
    with open(str(path) + ".json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a parameter checkpoint")
        version, count = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        table = []
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
            table.append((name, shape))
        tensors = {}
        for name, shape in table:
            size = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * size)
            tensors[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    kind = meta.get("model")
    if kind == "gcn":
        params = GcnParams(w1=tensors["w1"], w2=tensors["w2"])
    elif kind == "gprgnn":
        params = GprgnnParams(
            mlp_w1=tensors["mlp_w1"],
            mlp_w2=tensors["mlp_w2"],
            gpr_coeffs=tensors["gpr_coeffs"],
        )
    else:
        raise ValueError(f"{path}.json: unknown model kind {kind!r}")
    return params, meta
