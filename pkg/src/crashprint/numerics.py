"""Small dense-network core: layers, reverse-mode gradients, optimizers, gradient checking.

Only what the embedders need: fully connected layers with linear, relu or
sigmoid activations, evaluated on row-major batches.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidStateError, TrainingDivergedError

ACTIVATIONS = ("linear", "relu", "sigmoid")


class Rng:
    """Seeded PCG64 stream. Same seed, same draws."""

    algorithm = "PCG64"

    def __init__(self, seed):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.gen = np.random.Generator(np.random.PCG64(self.seed))

    def spawn(self, tag):
        # derived streams stay independent of how many draws the parent made
        mix = np.random.SeedSequence([self.seed, tag]).generate_state(2, dtype=np.uint64)
        return Rng(int(mix[0]))

    def normal(self, size, dtype=np.float64):
        return np.asarray(self.gen.standard_normal(size), dtype=dtype)

    def uniform(self, low, high, size=None, dtype=np.float64):
        out = self.gen.uniform(low, high, size)
        return out if size is None else np.asarray(out, dtype=dtype)

    def permutation(self, n):
        return self.gen.permutation(n)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def activate(name, a):
    if name == "linear":
        return a
    if name == "relu":
        return np.maximum(a, 0)
    if name == "sigmoid":
        return _sigmoid(a)
    raise InvalidInputError(f"unknown activation {name!r}")


def activation_grad(name, pre, out, g):
    if name == "linear":
        return g
    if name == "relu":
        return g * (pre > 0)
    return g * out * (1 - out)


class Dense:
    def __init__(self, weights, bias, activation="linear"):
        if activation not in ACTIVATIONS:
            raise InvalidInputError(f"unknown activation {activation!r}")
        weights = np.asarray(weights)
        bias = np.asarray(bias, dtype=weights.dtype)
        if weights.ndim != 2 or bias.shape != (weights.shape[0],):
            raise InvalidInputError(f"inconsistent layer shapes {weights.shape} / {bias.shape}")
        self.weights = weights
        self.bias = bias
        self.activation = activation

    @classmethod
    def xavier(cls, n_in, n_out, activation, rng, dtype=np.float32):
        limit = np.sqrt(6.0 / (n_in + n_out))
        w = rng.uniform(-limit, limit, (n_out, n_in), dtype=dtype)
        return cls(w, np.zeros(n_out, dtype=dtype), activation)

    @property
    def n_in(self):
        return self.weights.shape[1]

    @property
    def n_out(self):
        return self.weights.shape[0]

    def astype(self, dtype):
        return Dense(self.weights.astype(dtype), self.bias.astype(dtype), self.activation)


@dataclass
class Tape:
    inputs: list
    pre: list
    outputs: list
    version: int
    squeeze: bool


class Network:
    """A stack of Dense layers with an explicit forward tape.

    `version` increments whenever parameters change; a tape recorded under an
    older version is refused by `backward`.
    """

    def __init__(self, layers):
        self.layers = list(layers)
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_out != b.n_in:
                raise InvalidInputError(f"layer widths do not chain: {a.n_out} -> {b.n_in}")
        self.version = 0

    @property
    def n_in(self):
        return self.layers[0].n_in

    @property
    def n_out(self):
        return self.layers[-1].n_out

    def params(self):
        out = []
        for layer in self.layers:
            out += [layer.weights, layer.bias]
        return out

    def touch(self):
        self.version += 1

    def astype(self, dtype):
        return Network([layer.astype(dtype) for layer in self.layers])

    def forward(self, x):
        x = np.asarray(x)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.n_in:
            raise InvalidInputError(f"input width {x.shape[1]} != network input {self.n_in}")
        inputs, pre, outputs = [], [], []
        h = x
        for layer in self.layers:
            inputs.append(h)
            a = h @ layer.weights.T + layer.bias
            h = activate(layer.activation, a)
            pre.append(a)
            outputs.append(h)
        tape = Tape(inputs, pre, outputs, self.version, squeeze)
        return (h[0] if squeeze else h), tape

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, tape, output_grad):
        """Return ([dW0, db0, dW1, db1, ...], d_input) for the recorded forward pass."""
        if tape.version != self.version:
            raise InvalidStateError("tape is stale: parameters changed since forward")
        g = np.asarray(output_grad)
        if tape.squeeze:
            g = g[None, :]
        grads = [None] * (2 * len(self.layers))
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            g = activation_grad(layer.activation, tape.pre[i], tape.outputs[i], g)
            grads[2 * i] = g.T @ tape.inputs[i]
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ layer.weights
        return grads, (g[0] if tape.squeeze else g)


def _check_finite(grads, epoch=None):
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError("non-finite gradient", epoch)


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr < 0:
            raise InvalidInputError("learning rate must be non-negative")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = None
        self.v = None
        self.step_count = 0

    def step(self, params, grads, epoch=None):
        """Update `params` in place."""
        _check_finite(grads, epoch)
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        c1 = 1 - self.beta1 ** self.step_count
        c2 = 1 - self.beta2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            g = g.astype(p.dtype, copy=False)
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype, copy=False)
        for p in params:
            if not np.all(np.isfinite(p)):
                raise TrainingDivergedError("non-finite parameter after update", epoch)


class SGD:
    def __init__(self, lr=1e-2, momentum=0.0):
        if lr < 0:
            raise InvalidInputError("learning rate must be non-negative")
        self.lr, self.momentum = lr, momentum
        self.velocity = None
        self.step_count = 0

    def step(self, params, grads, epoch=None):
        _check_finite(grads, epoch)
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        self.step_count += 1
        for p, g, vel in zip(params, grads, self.velocity):
            vel *= self.momentum
            vel -= self.lr * g.astype(p.dtype, copy=False)
            p += vel


def make_optimizer(name, lr):
    if name == "adam":
        return Adam(lr)
    if name == "sgd":
        return SGD(lr, momentum=0.9)
    raise InvalidInputError(f"unknown optimizer {name!r}")


@dataclass
class GradientReport:
    max_rel_error: float
    tolerance: float
    n_checked: int
    worst: tuple

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance


def gradient_check(loss_and_grads, params, eps=1e-5, tolerance=1e-4, floor=1e-7):
    """Compare analytic gradients with central differences, entry by entry.

    `loss_and_grads()` evaluates the loss at the current contents of `params`
    (float64 arrays, perturbed in place here) and returns (loss, grads).
    Relative error uses max(|analytic|, |numeric|, floor) as denominator so
    entries whose true gradient is zero do not divide by zero.
    """
    _, analytic = loss_and_grads()
    analytic = [np.array(g, dtype=np.float64) for g in analytic]
    worst, worst_at, count = 0.0, None, 0
    for k, p in enumerate(params):
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_and_grads()[0]
            flat[i] = orig - eps
            down = loss_and_grads()[0]
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            a = analytic[k].reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            count += 1
            if err > worst:
                worst, worst_at = err, (k, i)
    return GradientReport(float(worst), tolerance, count, worst_at)
