"""Minimal dense-network core: forward/backward passes, Adam, gradient checks.

Everything downstream (classifier heads, encoder, discriminator, logistic
regression) is built from these pieces. All math is float64 and every
gradient has a closed form that the test suite verifies against central
finite differences.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

# A Matrix is a 2-D float64 ndarray whose rows are samples.
Matrix = np.ndarray

ACTIVATIONS = ("relu", "sigmoid", "identity")

# Probabilities are clamped to [PROB_EPS, 1 - PROB_EPS] before any log().
PROB_EPS = 1e-12


def named_rng(seed: int, name: str) -> np.random.Generator:
    """Reproducible RNG stream derived from (seed, stream name).

    Streams with different names are statistically independent, so adding
    or removing a consumer never shifts the draws seen by the others.
    """
    return np.random.default_rng(
        np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))])
    )


def as_matrix(x, name: str = "input") -> Matrix:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def check_finite(arr: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


@dataclass
class DenseLayer:
    """Fully connected layer: activation(X @ weights.T + bias)."""

    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match out_dim {self.weights.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation)


@dataclass
class MlpParams:
    """An ordered stack of dense layers with consistent dimensions."""

    layers: list[DenseLayer] = field(default_factory=list)

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(
                    f"layer output dim {a.out_dim} does not feed layer input dim {b.in_dim}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def param_arrays(self) -> list[np.ndarray]:
        """Flat parameter list [W0, b0, W1, b1, ...]; order is the contract
        grads and Adam moments follow."""
        out: list[np.ndarray] = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([layer.copy() for layer in self.layers])


def init_dense(in_dim: int, out_dim: int, activation: str, rng: np.random.Generator) -> DenseLayer:
    """He-uniform init for relu layers, Xavier-uniform otherwise; zero bias."""
    if activation == "relu":
        limit = np.sqrt(6.0 / in_dim)
    else:
        limit = np.sqrt(6.0 / (in_dim + out_dim))
    weights = rng.uniform(-limit, limit, size=(out_dim, in_dim))
    return DenseLayer(weights, np.zeros(out_dim), activation)


def init_mlp(dims: list[int], activations: list[str], seed: int, name: str) -> MlpParams:
    """Build an MLP with layer sizes dims[0] -> dims[1] -> ... -> dims[-1].

    `name` selects the RNG stream, so each network of a model draws its
    weights independently of the others.
    """
    if len(activations) != len(dims) - 1:
        raise ValueError("need one activation per layer")
    rng = named_rng(seed, name)
    layers = [
        init_dense(dims[i], dims[i + 1], activations[i], rng) for i in range(len(dims) - 1)
    ]
    return MlpParams(layers)


def activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        # Split by sign so exp() never overflows.
        out = np.empty_like(z, dtype=np.float64)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if kind == "identity":
        return np.asarray(z, dtype=np.float64)
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(kind: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """d activation / d z, given pre-activation z and output a."""
    if kind == "relu":
        return (z > 0).astype(np.float64)
    if kind == "sigmoid":
        return a * (1.0 - a)
    if kind == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {kind!r}")


def dense_forward(layer: DenseLayer, x: Matrix) -> Matrix:
    """activation(x @ W.T + b), broadcasting the bias per row."""
    x = as_matrix(x, "x")
    if x.shape[1] != layer.in_dim:
        raise ValueError(
            f"shape mismatch: input has {x.shape[1]} columns, layer expects {layer.in_dim}"
        )
    return activate(layer.activation, x @ layer.weights.T + layer.bias)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax; 1-D input is treated as a single row."""
    arr = np.asarray(logits, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr.reshape(1, -1)
    shifted = arr - arr.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    out = ez / ez.sum(axis=1, keepdims=True)
    return out[0] if squeeze else out


def mlp_forward(mlp: MlpParams, x: Matrix) -> tuple[Matrix, list[tuple]]:
    """Forward pass returning (output, cache).

    The cache holds, per layer, (input, pre-activation, output) so that
    mlp_backward never recomputes anything.
    """
    a = as_matrix(x, "x")
    if a.shape[1] != mlp.in_dim:
        raise ValueError(
            f"shape mismatch: input has {a.shape[1]} columns, network expects {mlp.in_dim}"
        )
    cache = []
    for layer in mlp.layers:
        z = a @ layer.weights.T + layer.bias
        out = activate(layer.activation, z)
        cache.append((a, z, out))
        a = out
    return a, cache


def mlp_backward(
    mlp: MlpParams, cache: list[tuple], upstream: Matrix
) -> tuple[list[np.ndarray], Matrix]:
    """Reverse-mode gradients of mlp_forward contracted with `upstream`.

    Returns (grads, input_grad) where grads matches param_arrays() order.
    """
    if len(cache) != len(mlp.layers):
        raise ValueError(
            f"cache has {len(cache)} layers but network has {len(mlp.layers)}"
        )
    grad = np.asarray(upstream, dtype=np.float64)
    if grad.shape != cache[-1][2].shape:
        raise ValueError(
            f"upstream gradient shape {grad.shape} does not match output shape {cache[-1][2].shape}"
        )
    grads: list[np.ndarray] = [None] * (2 * len(mlp.layers))
    for i in range(len(mlp.layers) - 1, -1, -1):
        layer = mlp.layers[i]
        x_in, z, out = cache[i]
        dz = grad * activation_grad(layer.activation, z, out)
        grads[2 * i] = dz.T @ x_in
        grads[2 * i + 1] = dz.sum(axis=0)
        grad = dz @ layer.weights
    return grads, grad


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"label out of range [0, {num_classes})")
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def clamp_probs(p: np.ndarray) -> np.ndarray:
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def bce_one_hot(probs: Matrix, labels: np.ndarray, num_classes: int | None = None) -> float:
    """Per-class binary cross-entropy against one-hot targets, batch mean.

    For each sample with one-hot target y and prediction p:
        -(sum_i y_i*log(p_i) + (1 - y_i)*log(1 - p_i))
    """
    probs = as_matrix(probs, "probs")
    m = probs.shape[1] if num_classes is None else num_classes
    y = one_hot(labels, m)
    pc = clamp_probs(probs)
    per_sample = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)).sum(axis=1)
    return float(per_sample.mean())


def bce_one_hot_grad(probs: Matrix, labels: np.ndarray) -> Matrix:
    """d(bce_one_hot)/d(probs); zero where the clamp is active."""
    probs = as_matrix(probs, "probs")
    y = one_hot(labels, probs.shape[1])
    pc = clamp_probs(probs)
    inside = (probs > PROB_EPS) & (probs < 1.0 - PROB_EPS)
    grad = -(y / pc - (1.0 - y) / (1.0 - pc)) * inside
    return grad / probs.shape[0]


def categorical_ce(probs: Matrix, labels: np.ndarray) -> float:
    """Plain multiclass cross-entropy -mean(log p[true])."""
    probs = as_matrix(probs, "probs")
    labels = np.asarray(labels, dtype=np.int64)
    picked = clamp_probs(probs[np.arange(probs.shape[0]), labels])
    return float(-np.log(picked).mean())


def categorical_ce_grad(probs: Matrix, labels: np.ndarray) -> Matrix:
    probs = as_matrix(probs, "probs")
    labels = np.asarray(labels, dtype=np.int64)
    grad = np.zeros_like(probs)
    rows = np.arange(probs.shape[0])
    picked = probs[rows, labels]
    inside = (picked > PROB_EPS) & (picked < 1.0 - PROB_EPS)
    grad[rows, labels] = -inside.astype(np.float64) / clamp_probs(picked) / probs.shape[0]
    return grad


def softmax_backward(probs: Matrix, dprobs: Matrix) -> Matrix:
    """Backprop dL/dprobs through a row-wise softmax to dL/dlogits."""
    probs = np.asarray(probs, dtype=np.float64)
    dprobs = np.asarray(dprobs, dtype=np.float64)
    dot = (dprobs * probs).sum(axis=1, keepdims=True)
    return probs * (dprobs - dot)


@dataclass
class AdamState:
    """Adam moments for one list of parameter arrays."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")

    @classmethod
    def for_params(cls, params: list[np.ndarray], **kwargs) -> "AdamState":
        state = cls(**kwargs)
        state.first_moment = [np.zeros_like(p) for p in params]
        state.second_moment = [np.zeros_like(p) for p in params]
        return state


def adam_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: AdamState
) -> tuple[list[np.ndarray], AdamState]:
    """One in-place Adam update with bias correction.

    theta -= lr * m_hat / (sqrt(v_hat) + eps)
    """
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ValueError("params, grads and Adam state sizes do not match")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"grad shape {g.shape} does not match param shape {p.shape}")
        m = state.first_moment[i]
        v = state.second_moment[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state


def l2_penalty(params, lam: float) -> tuple[float, list[np.ndarray]]:
    """lam * sum of squares over every entry (weights and biases alike)."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    arrays = params.param_arrays() if isinstance(params, MlpParams) else list(params)
    value = lam * float(sum(np.sum(a * a) for a in arrays))
    grads = [2.0 * lam * a for a in arrays]
    return value, grads


def grad_check(loss_fn, params: list[np.ndarray], epsilon: float = 1e-5) -> float:
    """Max relative error of analytic vs central-difference gradients.

    `loss_fn(params) -> (value, grads)` must be deterministic and must not
    mutate its input; grads follow the order of `params`. Relative error is
    |a - n| / max(|a|, |n|, 1e-12) per coordinate.
    """
    _, analytic = loss_fn(params)
    worst = 0.0
    for k, p in enumerate(params):
        flat = p.reshape(-1)
        a_flat = np.asarray(analytic[k]).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            up, _ = loss_fn(params)
            flat[j] = orig - epsilon
            down, _ = loss_fn(params)
            flat[j] = orig
            numeric = (up - down) / (2.0 * epsilon)
            denom = max(abs(a_flat[j]), abs(numeric), 1e-12)
            worst = max(worst, abs(a_flat[j] - numeric) / denom)
    return worst
