"""MLP classifier, momentum SGD and the binary checkpoint format."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autodiff import GraphError, Tensor, log_softmax_np
from .losses import cross_entropy, one_hot

MAGIC = b"BETA-CKPT\0"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class MlpClassifier:
    """Fully connected ReLU network ending in a softmax over ``widths[-1]`` classes.

    ``widths`` lists every layer width including input and output, so
    ``[2, 64, 64, 3]`` is a 2-feature, 3-class net with two hidden layers.
    Weights use a seeded He-style uniform init; biases start at zero.
    """

    def __init__(self, widths, seed: int | None = 0):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError(f"bad layer widths {widths}")
        self.widths = widths
        rng = np.random.default_rng(seed)
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = np.sqrt(6.0 / fan_in)
            self.weights.append(Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)), requires_grad=True))
            self.biases.append(Tensor(np.zeros(fan_out), requires_grad=True))

    @property
    def n_inputs(self) -> int:
        return self.widths[0]

    @property
    def n_classes(self) -> int:
        return self.widths[-1]

    def _check(self, x) -> None:
        data = x.data if isinstance(x, Tensor) else np.asarray(x)
        if data.ndim != 2 or data.shape[1] != self.n_inputs:
            raise ValueError(f"dimension error: expected (n, {self.n_inputs}) batch, got {data.shape}")

    def logits(self, x) -> Tensor:
        self._check(x)
        h = x if isinstance(x, Tensor) else Tensor(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = h.relu()
        return h

    def forward(self, x) -> Tensor:
        return self.logits(x).softmax()

    __call__ = forward

    def logits_np(self, x: np.ndarray) -> np.ndarray:
        """Graph-free logits; same arithmetic as :meth:`logits`."""
        self._check(x)
        h = np.asarray(x, dtype=np.float64)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.data + b.data
            if i < last:
                h = np.where(h > 0, h, 0.0)
        return h

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return np.exp(log_softmax_np(self.logits_np(x)))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits_np(x), axis=1)

    def parameters(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def body_parameters(self) -> list[Tensor]:
        return self.parameters()[:-2]

    def head_parameters(self) -> list[Tensor]:
        return self.parameters()[-2:]

    def copy(self) -> "MlpClassifier":
        clone = MlpClassifier.__new__(MlpClassifier)
        clone.widths = list(self.widths)
        clone.weights = [Tensor(w.data.copy(), requires_grad=True) for w in self.weights]
        clone.biases = [Tensor(b.data.copy(), requires_grad=True) for b in self.biases]
        return clone

    def flat(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.parameters()])


class Sgd:
    """Momentum SGD with decoupled weight decay.

    ``groups`` is a list of ``(params, lr)`` pairs. The update is
    ``v <- m v + g`` then ``p <- p - lr v - lr wd p``.
    """

    def __init__(self, groups, momentum: float = 0.9, weight_decay: float = 0.0):
        if momentum < 0 or weight_decay < 0:
            raise ValueError("momentum and weight decay must be non-negative")
        self.groups = []
        for params, lr in groups:
            if lr < 0:
                raise ValueError("learning rate must be non-negative")
            self.groups.append((list(params), float(lr)))
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.velocity = {id(p): np.zeros_like(p.data) for params, _ in self.groups for p in params}

    @classmethod
    def for_net(cls, net: MlpClassifier, lr_body: float, lr_head: float, momentum=0.9, weight_decay=0.0):
        groups = [(net.head_parameters(), lr_head)]
        body = net.body_parameters()
        if body:
            groups.insert(0, (body, lr_body))
        return cls(groups, momentum, weight_decay)

    def scale_lr(self, factor: float) -> "Sgd":
        for i, (params, lr) in enumerate(self.groups):
            self.groups[i] = (params, lr * factor)
        return self

    def step(self) -> None:
        for params, lr in self.groups:
            for p in params:
                if p.grad is None:
                    continue
                v = self.momentum * self.velocity[id(p)] + p.grad
                self.velocity[id(p)] = v
                p.data = p.data - lr * v - lr * self.weight_decay * p.data

    def zero_grad(self) -> None:
        for params, _ in self.groups:
            for p in params:
                p.grad = None


def backward_and_step(loss: Tensor, *optimizers: Sgd) -> None:
    if not isinstance(loss, Tensor) or not loss.requires_grad:
        raise GraphError("no recorded graph to differentiate")
    loss.backward()
    for opt in optimizers:
        opt.step()
    for opt in optimizers:
        opt.zero_grad()


def fit_classifier(
    x, y, n_classes, hidden=(64, 64), epochs=60, lr=0.05, batch_size=64, momentum=0.9, weight_decay=1e-4, seed=0
) -> MlpClassifier:
    """Minibatch cross-entropy training of a fresh MLP on hard labels."""
    x = np.asarray(x, dtype=np.float64)
    net = MlpClassifier([x.shape[1], *hidden, n_classes], seed=seed)
    opt = Sgd.for_net(net, lr, lr, momentum, weight_decay)
    rng = np.random.default_rng(seed + 1)
    targets = one_hot(y, n_classes)
    for _ in range(epochs):
        order = rng.permutation(len(x))
        for lo in range(0, len(x), batch_size):
            idx = order[lo : lo + batch_size]
            backward_and_step(cross_entropy(net.logits(x[idx]), targets[idx]), opt)
    return net


# -- checkpoints ---------------------------------------------------------
#
# layout (little endian):
#   b"BETA-CKPT\0" | u32 version | u32 layer count
#   per layer: u32 rows | u32 cols
#   per layer: rows*cols f64 weights (row-major) then cols f64 biases


def checkpoint_save(net: MlpClassifier, path) -> Path:
    path = Path(path)
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(net.weights))]
    for w in net.weights:
        parts.append(struct.pack("<II", *w.data.shape))
    for w, b in zip(net.weights, net.biases):
        parts.append(w.data.astype("<f8").tobytes(order="C"))
        parts.append(b.data.astype("<f8").tobytes())
    path.write_bytes(b"".join(parts))
    return path


def _read_layers(path) -> list[tuple[np.ndarray, np.ndarray]]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a BETA checkpoint (bad magic)")
    off = len(MAGIC)
    if len(raw) < off + 8:
        raise CheckpointError(f"{path}: truncated header")
    version, n_layers = struct.unpack_from("<II", raw, off)
    off += 8
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    if len(raw) < off + 8 * n_layers:
        raise CheckpointError(f"{path}: truncated layer headers")
    shapes = [struct.unpack_from("<II", raw, off + 8 * i) for i in range(n_layers)]
    off += 8 * n_layers
    expected = off + sum(8 * (r * c + c) for r, c in shapes)
    if len(raw) != expected:
        raise CheckpointError(f"{path}: payload is {len(raw)} bytes, expected {expected} (truncated or corrupt)")
    layers = []
    for r, c in shapes:
        w = np.frombuffer(raw, dtype="<f8", count=r * c, offset=off).reshape(r, c).astype(np.float64)
        off += 8 * r * c
        b = np.frombuffer(raw, dtype="<f8", count=c, offset=off).astype(np.float64)
        off += 8 * c
        layers.append((w, b))
    for i in range(1, len(shapes)):
        if shapes[i][0] != shapes[i - 1][1]:
            raise CheckpointError(f"{path}: layer {i} input width does not chain with layer {i - 1}")
    return layers


def checkpoint_load(path) -> MlpClassifier:
    layers = _read_layers(path)
    widths = [layers[0][0].shape[0]] + [w.shape[1] for w, _ in layers]
    net = MlpClassifier(widths, seed=0)
    for i, (w, b) in enumerate(layers):
        net.weights[i].data = w
        net.biases[i].data = b
    return net


def checkpoint_load_into(net: MlpClassifier, path) -> MlpClassifier:
    layers = _read_layers(path)
    if len(layers) != len(net.weights):
        raise CheckpointError(f"layer count mismatch: checkpoint has {len(layers)}, net has {len(net.weights)}")
    for i, (w, _) in enumerate(layers):
        if w.shape != net.weights[i].data.shape:
            raise CheckpointError(
                f"shape mismatch at layer {i}: checkpoint {w.shape}, net {net.weights[i].data.shape}"
            )
    for i, (w, b) in enumerate(layers):
        net.weights[i].data = w
        net.biases[i].data = b
    return net
