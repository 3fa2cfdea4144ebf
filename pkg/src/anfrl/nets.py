"""From-scratch MLP numerics with optional binary connectivity masks.

Everything here is plain numpy. Sparsity is simulated with dense matrices
carrying a boolean mask: masked-out weights are kept at exactly 0, their
gradients are reported as 0, and their Adam moments stay at 0, so the math
behaves as if those connections do not exist.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UsageError

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
TANH_EPS = 1e-6


@dataclass
class MLPSpec:
    input_dim: int
    hidden_dims: tuple[int, ...] = (256, 256)
    output_dim: int = 1
    activation: str = "relu"

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        if self.input_dim <= 0 or self.output_dim <= 0:
            raise ConfigError("input_dim and output_dim must be positive")
        if len(self.hidden_dims) < 1 or any(h <= 0 for h in self.hidden_dims):
            raise ConfigError("need at least one positive hidden dim")
        if self.activation != "relu":
            raise ConfigError(f"unsupported activation: {self.activation}")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_dims, self.output_dim]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]


@dataclass
class LayerParams:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)
    mask: np.ndarray | None = None  # bool (out, in); None means dense

    def apply_mask(self):
        if self.mask is not None:
            self.weights *= self.mask


@dataclass
class LayerGrads:
    weights: np.ndarray
    biases: np.ndarray


@dataclass
class ForwardCache:
    layer_inputs: list[np.ndarray]  # input to each affine layer
    preacts: list[np.ndarray]  # pre-activation of each hidden layer
    single: bool  # True if the original input was 1-D


def init_mlp(spec: MLPSpec, rng: np.random.Generator,
             masks: list[np.ndarray | None] | None = None) -> list[LayerParams]:
    """Uniform fan-in init (the usual +-1/sqrt(fan_in)), zeroing masked positions."""
    layers = []
    for i, (out_d, in_d) in enumerate(spec.layer_shapes):
        bound = 1.0 / np.sqrt(in_d)
        w = rng.uniform(-bound, bound, size=(out_d, in_d))
        b = rng.uniform(-bound, bound, size=out_d)
        mask = None
        if masks is not None and masks[i] is not None:
            mask = np.asarray(masks[i], dtype=bool)
            if mask.shape != (out_d, in_d):
                raise ConfigError(f"mask shape {mask.shape} != layer shape {(out_d, in_d)}")
            w *= mask
        layers.append(LayerParams(weights=w, biases=b, mask=mask))
    return layers


def forward(net: list[LayerParams], x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run the MLP; hidden layers use ReLU, the output layer is linear.

    Accepts a single vector or a (batch, dim) matrix.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != net[0].weights.shape[1]:
        raise ConfigError(f"input dim {x.shape[1]} != expected {net[0].weights.shape[1]}")
    layer_inputs, preacts = [], []
    for i, layer in enumerate(net):
        layer_inputs.append(x)
        z = x @ layer.weights.T + layer.biases
        if i < len(net) - 1:
            preacts.append(z)
            x = np.maximum(z, 0.0)
        else:
            x = z
    out = x[0] if single else x
    return out, ForwardCache(layer_inputs, preacts, single)


def backward(net: list[LayerParams], cache: ForwardCache,
             output_grad: np.ndarray) -> tuple[list[LayerGrads], np.ndarray]:
    """Chain-rule gradients for every layer, plus the gradient w.r.t. the input.

    Gradients at masked positions are reported as exactly 0.
    """
    if len(cache.layer_inputs) != len(net):
        raise UsageError("cache does not match network")
    g = np.asarray(output_grad, dtype=float)
    if cache.single:
        g = g[None, :]
    if g.shape != (cache.layer_inputs[-1].shape[0], net[-1].weights.shape[0]):
        raise UsageError("output_grad shape does not match cached forward pass")
    grads: list[LayerGrads] = [None] * len(net)  # type: ignore[list-item]
    for i in range(len(net) - 1, -1, -1):
        x = cache.layer_inputs[i]
        dw = g.T @ x
        db = g.sum(axis=0)
        if net[i].mask is not None:
            dw *= net[i].mask
        grads[i] = LayerGrads(dw, db)
        g = g @ net[i].weights
        if i > 0:
            g = g * (cache.preacts[i - 1] > 0)
    grad_input = g[0] if cache.single else g
    return grads, grad_input


@dataclass
class AdamState:
    """Per-network Adam accumulators. Masked positions always keep m = v = 0."""
    m: list[LayerGrads]
    v: list[LayerGrads]
    step_count: int = 0
    lr: float = 1e-3
    weight_decay: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_net(cls, net: list[LayerParams], lr: float = 1e-3,
                weight_decay: float = 2e-4, **kw) -> "AdamState":
        m = [LayerGrads(np.zeros_like(l.weights), np.zeros_like(l.biases)) for l in net]
        v = [LayerGrads(np.zeros_like(l.weights), np.zeros_like(l.biases)) for l in net]
        return cls(m=m, v=v, lr=lr, weight_decay=weight_decay, **kw)


def adam_step(state: AdamState, net: list[LayerParams], grads: list[LayerGrads]) -> None:
    """One Adam update in place, with bias correction.

    Weight decay is added to the gradient (L2 style) for existing weights only;
    biases get no decay. Masked weights and their moments stay exactly 0.
    """
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for layer, g, m, v in zip(net, grads, state.m, state.v):
        gw = g.weights + state.weight_decay * layer.weights
        if layer.mask is not None:
            gw = gw * layer.mask
        m.weights[:] = state.beta1 * m.weights + (1 - state.beta1) * gw
        v.weights[:] = state.beta2 * v.weights + (1 - state.beta2) * gw * gw
        layer.weights -= state.lr * (m.weights / bc1) / (np.sqrt(v.weights / bc2) + state.epsilon)
        m.biases[:] = state.beta1 * m.biases + (1 - state.beta1) * g.biases
        v.biases[:] = state.beta2 * v.biases + (1 - state.beta2) * g.biases * g.biases
        layer.biases -= state.lr * (m.biases / bc1) / (np.sqrt(v.biases / bc2) + state.epsilon)
        if layer.mask is not None:
            layer.weights *= layer.mask
            m.weights *= layer.mask
            v.weights *= layer.mask


def zero_moments(state: AdamState, layer_index: int, flat_positions: np.ndarray) -> None:
    """Zero the first and second weight moments at the given flat positions."""
    flat_positions = np.asarray(flat_positions, dtype=np.int64)
    size = state.m[layer_index].weights.size
    if flat_positions.size and (flat_positions.min() < 0 or flat_positions.max() >= size):
        raise UsageError("moment position out of range")
    state.m[layer_index].weights.flat[flat_positions] = 0.0
    state.v[layer_index].weights.flat[flat_positions] = 0.0


@dataclass
class GaussianPolicyOutput:
    mean: np.ndarray
    log_std: np.ndarray
    sampled_action: np.ndarray
    log_prob: float | np.ndarray
    pre_tanh: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]


def gaussian_head(mean: np.ndarray, log_std: np.ndarray,
                  rng: np.random.Generator | None = None,
                  xi: np.ndarray | None = None) -> GaussianPolicyOutput:
    """Squashed-Gaussian action sample with tanh change-of-variables log-prob.

    `xi` overrides the standard-normal draw (pass zeros for the mean action).
    """
    mean = np.asarray(mean, dtype=float)
    log_std = np.clip(np.asarray(log_std, dtype=float), LOG_STD_MIN, LOG_STD_MAX)
    if xi is None:
        if rng is None:
            raise UsageError("need rng or explicit xi")
        xi = rng.standard_normal(mean.shape)
    std = np.exp(log_std)
    u = mean + std * xi
    action = np.tanh(u)
    gauss = -0.5 * xi ** 2 - log_std - 0.5 * np.log(2.0 * np.pi)
    corr = np.log(1.0 - action ** 2 + TANH_EPS)
    log_prob = np.sum(gauss - corr, axis=-1)
    return GaussianPolicyOutput(mean=mean, log_std=log_std, sampled_action=action,
                                log_prob=log_prob, pre_tanh=u)


def tanh_gaussian_backward(out: GaussianPolicyOutput, xi: np.ndarray,
                           d_action: np.ndarray, d_log_prob: np.ndarray,
                           raw_log_std: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of a loss w.r.t. (mean, raw log_std) through the squashed sample.

    `d_action` is dL/da per component; `d_log_prob` is dL/dlogp per sample
    (broadcast over components). The clamp on log_std passes zero gradient
    outside its range.
    """
    t = out.sampled_action
    one_m_t2 = 1.0 - t ** 2
    std = np.exp(out.log_std)
    d_log_prob = np.asarray(d_log_prob, dtype=float)[..., None]
    # dL/du: through the action and through the tanh correction in logp
    du = d_action * one_m_t2 + d_log_prob * (2.0 * t * one_m_t2 / (one_m_t2 + TANH_EPS))
    d_mean = du
    d_log_std = du * std * xi + d_log_prob * (-1.0)
    clip_pass = (raw_log_std > LOG_STD_MIN) & (raw_log_std < LOG_STD_MAX)
    return d_mean, d_log_std * clip_pass
