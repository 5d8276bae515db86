"""
Small feedforward denoiser D(x_t; sigma, c) with hand-derived gradients.

The input block concatenates the preconditioned coordinates c_in(sigma) * x_t, Fourier features of log(sigma) and a
class embedding. The embedding table has one extra row for the null class used by the unconditional channel.

Parameter order (also the checkpoint order): W_0, b_0, ..., W_H, b_H, E.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import expit

from guidefree.common.utils import NULL_CLASS, ShapeError, as_rows, per_row
from guidefree.numerics.rng import Rng

NUM_FREQUENCIES = 8
FREQUENCIES = 2.0 ** np.arange(-3, NUM_FREQUENCIES - 3)


def silu(z: np.ndarray) -> np.ndarray:
    return z * expit(z)


def silu_grad(z: np.ndarray) -> np.ndarray:
    s = expit(z)
    return s * (1.0 + z * (1.0 - s))


def fourier_features(sigma: np.ndarray) -> np.ndarray:
    angles = np.log(sigma)[:, None] * FREQUENCIES[None, :]
    return np.concatenate([np.cos(angles), np.sin(angles)], axis=1)


def parameter_shapes(data_dim: int, hidden_layers: int, width: int, num_classes: int, embedding_dim: int):
    input_dim = data_dim + 2 * NUM_FREQUENCIES + embedding_dim
    widths = [input_dim] + [width] * hidden_layers + [data_dim]
    shapes = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        shapes.append((fan_in, fan_out))
        shapes.append((fan_out,))
    shapes.append((num_classes + 1, embedding_dim))
    return shapes


def parameter_count(data_dim: int, hidden_layers: int, width: int, num_classes: int, embedding_dim: int) -> int:
    return sum(int(np.prod(s)) for s in parameter_shapes(data_dim, hidden_layers, width, num_classes, embedding_dim))


@dataclass
class DenoiserModel:
    data_dim: int
    num_classes: int
    hidden_layers: int = 3
    width: int = 128
    embedding_dim: int = 16
    sigma_data: float = 1.0
    params: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.params:
            self.params = [np.zeros(s) for s in self.shapes()]
        if [p.shape for p in self.params] != self.shapes():
            raise ShapeError('parameter shapes do not match the architecture')

    def shapes(self):
        return parameter_shapes(self.data_dim, self.hidden_layers, self.width, self.num_classes, self.embedding_dim)

    @property
    def weights(self) -> List[np.ndarray]:
        return self.params[0:-1:2]

    @property
    def biases(self) -> List[np.ndarray]:
        return self.params[1:-1:2]

    @property
    def embedding(self) -> np.ndarray:
        return self.params[-1]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params)

    def with_params(self, params: List[np.ndarray]) -> DenoiserModel:
        return DenoiserModel(
            self.data_dim, self.num_classes, self.hidden_layers, self.width, self.embedding_dim, self.sigma_data,
            [np.array(p, dtype=np.float64) for p in params]
        )

    def copy(self) -> DenoiserModel:
        return copy.deepcopy(self)

    def zero_grads(self) -> List[np.ndarray]:
        return [np.zeros_like(p) for p in self.params]

    def same_architecture(self, other: DenoiserModel) -> bool:
        return [p.shape for p in self.params] == [p.shape for p in other.params]

    def embedding_rows(self, class_id) -> np.ndarray:
        class_id = np.asarray(class_id)
        if np.any((class_id < NULL_CLASS) | (class_id >= self.num_classes)):
            raise ValueError('class id out of range [0, {}) or NULL: {}'.format(self.num_classes, class_id))
        return np.where(class_id == NULL_CLASS, self.num_classes, class_id)


def init_model(
        data_dim: int, num_classes: int, rng: Rng, hidden_layers: int = 3, width: int = 128, embedding_dim: int = 16,
        sigma_data: float = 1.0
) -> DenoiserModel:
    """
    He fan-in initialization: weights ~ N(0, 2 / fan_in), zero biases, standard normal embeddings.
    """
    model = DenoiserModel(data_dim, num_classes, hidden_layers, width, embedding_dim, sigma_data)
    params = []
    for shape in model.shapes()[:-1]:
        if len(shape) == 2:
            params.append(rng.standard_normal(shape) * np.sqrt(2.0 / shape[0]))
        else:
            params.append(np.zeros(shape))
    params.append(rng.standard_normal(model.shapes()[-1]))
    return model.with_params(params)


@dataclass
class Trace:
    """Intermediate values of one forward pass, consumed by backward."""
    sigma: np.ndarray
    rows: np.ndarray
    c_in: np.ndarray
    pre_activations: List[np.ndarray]
    activations: List[np.ndarray]
    output: np.ndarray


def _prepare(model: DenoiserModel, x_t, sigma, class_id):
    x_t = as_rows(x_t, model.data_dim)
    n = x_t.shape[0]
    sigma = per_row(sigma, n)
    if np.any(~(sigma > 0)):
        raise ValueError('sigma must be positive, got min {}'.format(np.min(sigma)))
    rows = model.embedding_rows(per_row(class_id, n, dtype=np.int64))
    return x_t, sigma, rows


def forward_trace(model: DenoiserModel, x_t, sigma, class_id) -> Trace:
    x_t, sigma, rows = _prepare(model, x_t, sigma, class_id)
    c_in = 1.0 / np.sqrt(sigma ** 2 + model.sigma_data ** 2)
    a = np.concatenate([c_in[:, None] * x_t, fourier_features(sigma), model.embedding[rows]], axis=1)
    pre_activations = []
    activations = [a]
    weights, biases = model.weights, model.biases
    for w, b in zip(weights[:-1], biases[:-1]):
        z = a @ w + b
        a = silu(z)
        pre_activations.append(z)
        activations.append(a)
    output = a @ weights[-1] + biases[-1]
    return Trace(sigma, rows, c_in, pre_activations, activations, output)


def forward(model: DenoiserModel, x_t, sigma, class_id) -> np.ndarray:
    """
    Denoised prediction D(x_t; sigma, c) for a batch.

    :param model: The denoiser.
    :param x_t: Noisy points of shape [N, data_dim].
    :param sigma: Positive noise level, scalar or one per row.
    :param class_id: Class index or NULL_CLASS, scalar or one per row.
    :return: Array of shape [N, data_dim].
    """
    return forward_trace(model, x_t, sigma, class_id).output


def backward(
        model: DenoiserModel, x_t, sigma, class_id, upstream_grad: np.ndarray, trace: Optional[Trace] = None
):
    """
    Reverse-mode gradients of sum(upstream_grad * forward(...)).

    :return: (parameter gradients in parameter order, gradient with respect to x_t)
    """
    if trace is None:
        trace = forward_trace(model, x_t, sigma, class_id)
    upstream_grad = np.asarray(upstream_grad, dtype=np.float64)
    if upstream_grad.shape != trace.output.shape:
        raise ShapeError('upstream gradient shape {} != output shape {}'.format(
            upstream_grad.shape, trace.output.shape))

    weights = model.weights
    num_layers = len(weights)
    weight_grads = [None] * num_layers
    bias_grads = [None] * num_layers

    g = upstream_grad
    for layer in reversed(range(num_layers)):
        weight_grads[layer] = trace.activations[layer].T @ g
        bias_grads[layer] = g.sum(axis=0)
        g = g @ weights[layer].T
        if layer > 0:
            g = g * silu_grad(trace.pre_activations[layer - 1])

    d = model.data_dim
    x_grad = g[:, :d] * trace.c_in[:, None]
    embedding_grad = np.zeros_like(model.embedding)
    np.add.at(embedding_grad, trace.rows, g[:, d + 2 * NUM_FREQUENCIES:])

    grads = []
    for wg, bg in zip(weight_grads, bias_grads):
        grads.append(wg)
        grads.append(bg)
    grads.append(embedding_grad)
    return grads, x_grad


def test_zero_model_outputs_last_bias():
    model = DenoiserModel(data_dim=2, num_classes=3, hidden_layers=2, width=8)
    model.biases[-1][:] = [0.25, -1.5]
    out = forward(model, np.ones((4, 2)), 0.7, [0, 1, 2, NULL_CLASS])
    assert np.array_equal(out, np.tile([0.25, -1.5], (4, 1)))
