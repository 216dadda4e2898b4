"""Small numpy models with flat parameter vectors and hand-written gradients.

Two architectures are supported: multinomial logistic regression and a
one-hidden-layer ReLU network with (inverted) dropout on the hidden layer.
Parameters always live in one contiguous vector so that federated averaging
and pseudo-model arithmetic are plain vector operations.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Union

import numpy as np

PV_MAGIC = b"FPV1"


class EmptyDataset(ValueError):
    pass


@dataclass
class EvalSet:
    """Features ``X`` (rows are samples) with integer labels ``y``."""

    X: np.ndarray
    y: np.ndarray
    num_classes: int | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"{self.X.shape[0]} feature rows but {self.y.shape[0]} labels")
        if self.num_classes is None:
            self.num_classes = int(self.y.max()) + 1 if self.y.size else 0
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise ValueError("labels must lie in [0, num_classes)")

    def __len__(self) -> int:
        return int(self.y.shape[0])

    @property
    def dim(self) -> int:
        return int(self.X.shape[1])

    def subset(self, idx) -> "EvalSet":
        return EvalSet(self.X[idx], self.y[idx], self.num_classes)

    def with_labels(self, y: np.ndarray) -> "EvalSet":
        return EvalSet(self.X, y, self.num_classes)


@dataclass(frozen=True)
class LogRegSpec:
    input_dim: int
    num_classes: int

    kind = "logreg"

    @property
    def num_params(self) -> int:
        return self.input_dim * self.num_classes + self.num_classes

    def unpack(self, theta: np.ndarray):
        d, c = self.input_dim, self.num_classes
        return theta[: d * c].reshape(d, c), theta[d * c :]

    def init(self, rng: np.random.Generator) -> np.ndarray:
        theta = np.zeros(self.num_params)
        W, _ = self.unpack(theta)
        bound = 1.0 / np.sqrt(self.input_dim)
        W[...] = rng.uniform(-bound, bound, size=W.shape)
        return theta

    def logits(self, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
        W, b = self.unpack(theta)
        return X @ W + b

    def loss_and_grad(self, theta, X, y, rng=None):
        W, b = self.unpack(theta)
        z = X @ W + b
        dz, loss = _softmax_xent(z, y)
        grad = np.empty_like(theta)
        gW, gb = self.unpack(grad)
        gW[...] = X.T @ dz
        gb[...] = dz.sum(axis=0)
        return loss, grad

    def active_units(self, theta, X):
        """Logistic regression is smooth everywhere."""
        return None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "input_dim": self.input_dim, "num_classes": self.num_classes}


@dataclass(frozen=True)
class MlpSpec:
    """``input -> hidden (ReLU, dropout) -> logits``."""

    input_dim: int
    num_classes: int
    hidden_units: int = 64
    dropout_p: float = 0.5

    kind = "mlp"

    def __post_init__(self):
        if self.hidden_units <= 0:
            raise ValueError("hidden_units must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")

    @property
    def num_params(self) -> int:
        d, h, c = self.input_dim, self.hidden_units, self.num_classes
        return d * h + h + h * c + c

    def unpack(self, theta: np.ndarray):
        d, h, c = self.input_dim, self.hidden_units, self.num_classes
        o1 = d * h
        o2 = o1 + h
        o3 = o2 + h * c
        return theta[:o1].reshape(d, h), theta[o1:o2], theta[o2:o3].reshape(h, c), theta[o3:]

    def init(self, rng: np.random.Generator) -> np.ndarray:
        theta = np.zeros(self.num_params)
        W1, _, W2, _ = self.unpack(theta)
        b1 = 1.0 / np.sqrt(self.input_dim)
        b2 = 1.0 / np.sqrt(self.hidden_units)
        W1[...] = rng.uniform(-b1, b1, size=W1.shape)
        W2[...] = rng.uniform(-b2, b2, size=W2.shape)
        return theta

    def logits(self, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
        W1, b1, W2, b2 = self.unpack(theta)
        return np.maximum(X @ W1 + b1, 0.0) @ W2 + b2

    def loss_and_grad(self, theta, X, y, rng=None):
        """Mean cross-entropy and its gradient; dropout is active iff ``rng`` is given."""
        W1, b1, W2, b2 = self.unpack(theta)
        pre = X @ W1 + b1
        h = np.maximum(pre, 0.0)
        mask = None
        if rng is not None and self.dropout_p > 0.0:
            keep = 1.0 - self.dropout_p
            mask = (rng.random(h.shape) < keep).astype(h.dtype) / keep
            h = h * mask
        z = h @ W2 + b2
        dz, loss = _softmax_xent(z, y)
        grad = np.empty_like(theta)
        gW1, gb1, gW2, gb2 = self.unpack(grad)
        gW2[...] = h.T @ dz
        gb2[...] = dz.sum(axis=0)
        dh = dz @ W2.T
        if mask is not None:
            dh *= mask
        dh *= pre > 0
        gW1[...] = X.T @ dh
        gb1[...] = dh.sum(axis=0)
        return loss, grad

    def active_units(self, theta, X):
        """Which hidden ReLUs are on; the loss is smooth while this pattern is fixed."""
        W1, b1, _, _ = self.unpack(theta)
        return X @ W1 + b1 > 0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "hidden_units": self.hidden_units,
            "dropout_p": self.dropout_p,
        }


ModelSpec = Union[MlpSpec, LogRegSpec]


def spec_from_dict(d: dict) -> ModelSpec:
    d = dict(d)
    kind = d.pop("kind")
    if kind == "mlp":
        return MlpSpec(**d)
    if kind == "logreg":
        return LogRegSpec(**d)
    raise ValueError(f"unknown model kind {kind!r}")


def _softmax_xent(z: np.ndarray, y: np.ndarray):
    """Gradient of mean cross-entropy w.r.t. logits, and the loss itself."""
    z = z - z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    s = ez.sum(axis=1, keepdims=True)
    rows = np.arange(y.size)
    loss = float(np.mean(np.log(s[:, 0]) - z[rows, y]))
    p = ez / s
    p[rows, y] -= 1.0
    p /= y.size
    return p, loss


@dataclass
class ParamVector:
    """Flat model parameters tagged with the architecture they belong to."""

    values: np.ndarray
    spec: ModelSpec

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 1 or self.values.size != self.spec.num_params:
            raise ValueError(f"expected {self.spec.num_params} parameters, got shape {self.values.shape}")

    def _check(self, other: "ParamVector") -> None:
        if other.spec != self.spec:
            raise ValueError("parameter vectors belong to different architectures")

    def __add__(self, other: "ParamVector") -> "ParamVector":
        self._check(other)
        return ParamVector(self.values + other.values, self.spec)

    def __sub__(self, other: "ParamVector") -> "ParamVector":
        self._check(other)
        return ParamVector(self.values - other.values, self.spec)

    def __mul__(self, a: float) -> "ParamVector":
        return ParamVector(self.values * a, self.spec)

    __rmul__ = __mul__

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.spec)

    @staticmethod
    def lincomb(coeffs, vectors: list["ParamVector"]) -> "ParamVector":
        """``sum_k coeffs[k] * vectors[k]`` accumulated in list order."""
        if not vectors:
            raise ValueError("need at least one vector")
        out = np.zeros_like(vectors[0].values)
        for a, v in zip(coeffs, vectors):
            vectors[0]._check(v)
            out += a * v.values
        return ParamVector(out, vectors[0].spec)

    def to_bytes(self) -> bytes:
        """``FPV1``, header length, JSON layout header, float32 little-endian values."""
        header = json.dumps({"spec": self.spec.to_dict(), "count": int(self.values.size)}, sort_keys=True).encode()
        return PV_MAGIC + struct.pack("<I", len(header)) + header + self.values.astype("<f4").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ParamVector":
        if blob[:4] != PV_MAGIC:
            raise ValueError("not a serialized parameter vector")
        (hlen,) = struct.unpack("<I", blob[4:8])
        header = json.loads(blob[8 : 8 + hlen])
        values = np.frombuffer(blob[8 + hlen :], dtype="<f4").astype(np.float64)
        if values.size != header["count"]:
            raise ValueError(f"expected {header['count']} values, found {values.size}")
        return cls(values, spec_from_dict(header["spec"]))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ParamVector":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass(frozen=True)
class SgdConfig:
    lr: float = 0.01
    momentum: float = 0.5
    batch_size: int = 64
    epochs: int = 10

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 10


OptimizerConfig = Union[SgdConfig, AdamConfig]


def init_params(spec: ModelSpec, seed) -> ParamVector:
    """Fan-in scaled uniform weights, zero biases; deterministic in ``seed``."""
    return ParamVector(spec.init(np.random.default_rng(seed)), spec)


def train_local(params: ParamVector, data: EvalSet, cfg: OptimizerConfig, seed, dtype=np.float64) -> ParamVector:
    """Run ``cfg.epochs`` of shuffled minibatch training on cross-entropy.

    Optimizer state starts fresh on every call. ``params`` is not modified.
    """
    if len(data) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    spec = params.spec
    theta = params.values.astype(dtype, copy=True)
    if cfg.epochs == 0:
        return ParamVector(theta.astype(np.float64), spec)
    rng = np.random.default_rng(seed)
    X = np.asarray(data.X, dtype=dtype)
    y = data.y
    N = len(data)
    bs = cfg.batch_size
    adam = isinstance(cfg, AdamConfig)
    buf = np.zeros_like(theta)
    if adam:
        sq = np.zeros_like(theta)
        step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(N)
        for start in range(0, N, bs):
            idx = order[start : start + bs]
            _, g = spec.loss_and_grad(theta, X[idx], y[idx], rng)
            if adam:
                step += 1
                buf *= cfg.beta1
                buf += (1 - cfg.beta1) * g
                sq *= cfg.beta2
                sq += (1 - cfg.beta2) * g * g
                mhat = buf / (1 - cfg.beta1**step)
                vhat = sq / (1 - cfg.beta2**step)
                theta -= cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps)
            else:
                buf *= cfg.momentum
                buf += g
                theta -= cfg.lr * buf
    return ParamVector(theta.astype(np.float64), spec)


def predict(params: ParamVector, X: np.ndarray, batch: int = 8192) -> np.ndarray:
    out = np.empty(X.shape[0], dtype=np.int64)
    for s in range(0, X.shape[0], batch):
        out[s : s + batch] = np.argmax(params.spec.logits(params.values, X[s : s + batch]), axis=1)
    return out


def evaluate(params: ParamVector, data: EvalSet) -> float:
    """Top-1 accuracy with dropout disabled."""
    if len(data) == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    return float(np.mean(predict(params, data.X) == data.y))


def mean_loss(params: ParamVector, data: EvalSet) -> float:
    loss, _ = params.spec.loss_and_grad(params.values, np.asarray(data.X, float), data.y, None)
    return loss


@dataclass
class GradientCheck:
    worst: float
    checked: int
    skipped: int  # coordinates whose stencil crosses a ReLU kink


def gradient_check_report(spec: ModelSpec, data: EvalSet, seed, coords: int = 50, h: float = 1e-5) -> GradientCheck:
    """Compare backprop with central differences on ``coords`` random coordinates.

    Dropout is off. Relative error per coordinate is
    ``|a - n| / max(|a| + |n|, 1e-6)`` so that coordinates with vanishing
    gradient do not blow up the ratio. A central difference is only a valid
    oracle where the loss is smooth on ``[theta - h, theta + h]``: coordinates
    whose perturbation switches a ReLU on or off are skipped, and further
    coordinates are drawn until ``coords`` have been compared.
    """
    rng = np.random.default_rng(seed)
    theta = spec.init(rng)
    X = np.asarray(data.X, dtype=np.float64)
    y = data.y
    _, g = spec.loss_and_grad(theta, X, y, None)
    pattern = spec.active_units(theta, X)
    worst = 0.0
    checked = skipped = 0
    for j in rng.permutation(theta.size):
        if checked == coords:
            break
        tp = theta.copy()
        tp[j] += h
        tm = theta.copy()
        tm[j] -= h
        if pattern is not None and not (
            np.array_equal(spec.active_units(tp, X), pattern) and np.array_equal(spec.active_units(tm, X), pattern)
        ):
            skipped += 1
            continue
        num = (spec.loss_and_grad(tp, X, y, None)[0] - spec.loss_and_grad(tm, X, y, None)[0]) / (2 * h)
        worst = max(worst, abs(g[j] - num) / max(abs(g[j]) + abs(num), 1e-6))
        checked += 1
    return GradientCheck(worst, checked, skipped)


def gradient_check(spec: ModelSpec, data: EvalSet, seed, coords: int = 50, h: float = 1e-5) -> float:
    """Max relative error of :func:`gradient_check_report`."""
    return gradient_check_report(spec, data, seed, coords, h).worst
