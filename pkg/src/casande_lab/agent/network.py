"""Two-headed MLP in plain numpy with hand-written backprop.

Shapes follow the row-vector convention ``h @ W + b``.  A shared ReLU encoder
feeds a Q head (E + 1 outputs, the last one is the exit action) and a
classifier head (D logits).  Every hidden layer of the heads is ReLU too;
output layers are linear.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


class ShapeMismatch(ValueError):
    pass


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray


@dataclass
class NetworkParams:
    encoder: list[Layer]
    q_head: list[Layer]
    clf_head: list[Layer]

    @property
    def input_dim(self) -> int:
        return self.encoder[0].W.shape[0]

    @property
    def num_actions(self) -> int:
        return self.q_head[-1].W.shape[1]

    @property
    def num_classes(self) -> int:
        return self.clf_head[-1].W.shape[1]

    def layers(self) -> list[Layer]:
        return self.encoder + self.q_head + self.clf_head

    def arrays(self) -> list[np.ndarray]:
        """Flat list of parameter arrays in a fixed order (W then b per layer)."""
        out = []
        for layer in self.layers():
            out.extend((layer.W, layer.b))
        return out

    def copy(self) -> "NetworkParams":
        cp = lambda ls: [Layer(l.W.copy(), l.b.copy()) for l in ls]
        return NetworkParams(cp(self.encoder), cp(self.q_head), cp(self.clf_head))

    def zeros_like(self) -> "NetworkParams":
        z = lambda ls: [Layer(np.zeros_like(l.W), np.zeros_like(l.b)) for l in ls]
        return NetworkParams(z(self.encoder), z(self.q_head), z(self.clf_head))

    def checksum(self) -> str:
        h = hashlib.sha256()
        for a in self.arrays():
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return h.hexdigest()

    def to_dict(self) -> dict:
        ser = lambda ls: [{"W": l.W.tolist(), "b": l.b.tolist()} for l in ls]
        return {"encoder": ser(self.encoder), "q_head": ser(self.q_head), "clf_head": ser(self.clf_head)}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkParams":
        de = lambda ls: [Layer(np.array(l["W"], dtype=float), np.array(l["b"], dtype=float)) for l in ls]
        return cls(de(d["encoder"]), de(d["q_head"]), de(d["clf_head"]))


def _dense(sizes, rng, zero=False):
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if zero:
            W = np.zeros((fan_in, fan_out))
        else:
            W = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        layers.append(Layer(W, np.zeros(fan_out)))
    return layers


def init_params(input_dim: int, num_actions: int, num_classes: int, rng: np.random.Generator | None = None,
                encoder=(64, 64), head=(32,), zero: bool = False) -> NetworkParams:
    if rng is None and not zero:
        rng = np.random.default_rng(0)
    enc_sizes = [input_dim, *encoder]
    latent = enc_sizes[-1]
    return NetworkParams(
        _dense(enc_sizes, rng, zero),
        _dense([latent, *head, num_actions], rng, zero),
        _dense([latent, *head, num_classes], rng, zero),
    )


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _run(layers, h, cache):
    last = len(layers) - 1
    for i, layer in enumerate(layers):
        z = h @ layer.W + layer.b
        cache.append((h, z))
        h = z if i == last else np.maximum(z, 0.0)
    return h


def _run_hidden(layers, h, cache):
    for layer in layers:
        z = h @ layer.W + layer.b
        cache.append((h, z))
        h = np.maximum(z, 0.0)
    return h


def forward_batch(params: NetworkParams, X: np.ndarray):
    """Returns ``(q_values, logits, cache)`` for a batch ``X`` of shape (N, S)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != params.input_dim:
        raise ShapeMismatch(f"state dimension {X.shape[1]} != network input {params.input_dim}")
    enc_cache, q_cache, c_cache = [], [], []
    latent = _run_hidden(params.encoder, X, enc_cache)
    q = _run(params.q_head, latent, q_cache)
    logits = _run(params.clf_head, latent, c_cache)
    return q, logits, (enc_cache, q_cache, c_cache)


def forward(params: NetworkParams, state_vector):
    """Q-values and belief for a single state vector."""
    q, logits, _ = forward_batch(params, state_vector)
    return q[0], softmax(logits)[0]


def _back(layers, cache, grad, grads, linear_top):
    last = len(layers) - 1
    for i in range(last, -1, -1):
        h, z = cache[i]
        if not (linear_top and i == last):
            grad = grad * (z > 0)
        grads[i] = Layer(h.T @ grad, grad.sum(axis=0))
        grad = grad @ layers[i].W.T
    return grad


def backward(params: NetworkParams, cache, dq: np.ndarray | None, dlogits: np.ndarray | None) -> NetworkParams:
    """Gradients of a scalar loss given its gradients w.r.t. both head outputs."""
    enc_cache, q_cache, c_cache = cache
    n = enc_cache[0][0].shape[0]
    grads = params.zeros_like()
    latent_dim = params.encoder[-1].W.shape[1]
    dlatent = np.zeros((n, latent_dim))
    if dq is not None:
        dlatent += _back(params.q_head, q_cache, dq, grads.q_head, True)
    if dlogits is not None:
        dlatent += _back(params.clf_head, c_cache, dlogits, grads.clf_head, True)
    _back(params.encoder, enc_cache, dlatent, grads.encoder, False)
    return grads


def soft_update(theta: NetworkParams, phi: NetworkParams, rho: float) -> NetworkParams:
    """Return ``(1 - rho) * phi + rho * theta`` elementwise."""
    a, b = theta.arrays(), phi.arrays()
    if len(a) != len(b) or any(x.shape != y.shape for x, y in zip(a, b)):
        raise ShapeMismatch("theta and phi have different architectures")
    out = phi.copy()
    for dst, src in zip(out.arrays(), a):
        dst *= 1.0 - rho
        dst += rho * src
    return out


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: NetworkParams, grads: NetworkParams) -> None:
        for p, g in zip(params.arrays(), grads.arrays()):
            p -= self.lr * g

    def state_dict(self) -> dict:
        return {"kind": "sgd", "lr": self.lr}


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: NetworkParams, grads: NetworkParams) -> None:
        ps, gs = params.arrays(), grads.arrays()
        if self.m is None:
            self.m = [np.zeros_like(p) for p in ps]
            self.v = [np.zeros_like(p) for p in ps]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(ps, gs, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict:
        return {
            "kind": "adam", "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
            "t": self.t,
            "m": None if self.m is None else [a.tolist() for a in self.m],
            "v": None if self.v is None else [a.tolist() for a in self.v],
        }


def make_optimizer(kind: str, lr: float):
    if kind == "sgd":
        return SGD(lr)
    if kind == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {kind!r}")
