"""Dense feedforward networks with manual backpropagation.

Flat parameter ordering (used by every partition and score matrix):
layers in order, and within a layer the weight matrix row-major followed by
the bias vector.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from ..exceptions import InputShapeError
from .checkpoint import register

ACTIVATIONS = ("elu", "relu", "sigmoid", "identity")


def activate(z, name):
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "elu":
        # alpha = 1
        return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(z, a, name):
    """Derivative of the activation evaluated at pre-activation ``z``."""
    if name == "identity":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "elu":
        return np.where(z > 0, 1.0, a + 1.0)
    if name == "sigmoid":
        return a * (1.0 - a)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        self.weight = np.array(self.weight, dtype=np.float64, ndmin=2)
        self.bias = np.array(self.bias, dtype=np.float64).reshape(-1)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.bias.shape[0] != self.weight.shape[0]:
            raise InputShapeError(
                f"bias length {self.bias.shape[0]} does not match "
                f"{self.weight.shape[0]} output units"
            )

    @property
    def n_in(self):
        return self.weight.shape[1]

    @property
    def n_out(self):
        return self.weight.shape[0]

    @property
    def n_params(self):
        return self.weight.size + self.bias.size


class ParameterVectorMixin:
    """Flat-vector view over ``self.layers``."""

    layers: list

    @property
    def n_params(self):
        return sum(layer.n_params for layer in self.layers)

    def layer_offsets(self):
        offsets, pos = [], 0
        for layer in self.layers:
            offsets.append(pos)
            pos += layer.n_params
        return offsets

    def layer_slice(self, i):
        start = self.layer_offsets()[i]
        return np.arange(start, start + self.layers[i].n_params)

    def flat_params(self):
        return np.concatenate(
            [np.concatenate([l.weight.ravel(), l.bias]) for l in self.layers]
        )

    def set_flat_params(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise InputShapeError(
                f"expected {self.n_params} parameters, got shape {flat.shape}"
            )
        pos = 0
        for layer in self.layers:
            nw = layer.weight.size
            layer.weight[...] = flat[pos:pos + nw].reshape(layer.weight.shape)
            layer.bias[...] = flat[pos + nw:pos + layer.n_params]
            pos += layer.n_params

    def copy(self):
        return copy.deepcopy(self)


@register
class DenseNet(ParameterVectorMixin):
    """Stack of affine layers, each followed by its activation.

    Dropout (inverted scaling) is applied to the output of every hidden
    layer when ``training`` is set; the final layer never drops units.
    """

    def __init__(self, layers, dropout=0.0):
        if not layers:
            raise ValueError("a DenseNet needs at least one layer")
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        for prev, nxt in zip(layers[:-1], layers[1:]):
            if nxt.n_in != prev.n_out:
                raise InputShapeError(
                    f"layer expects {nxt.n_in} inputs but previous layer "
                    f"has {prev.n_out} outputs"
                )
        self.layers = list(layers)
        self.dropout = float(dropout)

    @classmethod
    def from_sizes(cls, sizes, activations, dropout=0.0, rng=None):
        """He-style initialization for ``sizes = [n_in, h1, ..., n_out]``."""
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        rng = np.random.default_rng(rng)
        layers = []
        for n_in, n_out, act in zip(sizes[:-1], sizes[1:], activations):
            scale = np.sqrt(2.0 / n_in) if act in ("relu", "elu") else np.sqrt(1.0 / n_in)
            layers.append(Layer(rng.normal(0.0, scale, (n_out, n_in)), np.zeros(n_out), act))
        return cls(layers, dropout=dropout)

    @property
    def n_inputs(self):
        return self.layers[0].n_in

    @property
    def n_outputs(self):
        return self.layers[-1].n_out

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        out, _ = self.forward_cache(x[None, :] if single else x, training, rng)
        return out[0] if single else out

    __call__ = forward

    def forward_cache(self, X, training=False, rng=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_inputs:
            raise InputShapeError(
                f"expected input with {self.n_inputs} features, got shape {X.shape}"
            )
        use_dropout = training and self.dropout > 0.0
        if use_dropout and rng is None:
            raise ValueError("dropout during training needs a generator")
        cache = []
        a = X
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            z = a @ layer.weight.T + layer.bias
            out = activate(z, layer.activation)
            mask = None
            if use_dropout and i < last:
                keep = 1.0 - self.dropout
                mask = (rng.random(out.shape) < keep) / keep
                dropped = out * mask
            else:
                dropped = out
            cache.append((a, z, out, mask))
            a = dropped
        return a, cache

    def backward(self, cache, grad_out):
        """Backpropagate ``grad_out`` (n x n_outputs).

        Returns the gradient with respect to the input and, per layer, the
        pair ``(delta, a_in)`` from which per-sample weight gradients are
        outer products.
        """
        grad = np.asarray(grad_out, dtype=np.float64)
        terms = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            a_in, z, out, mask = cache[i]
            if mask is not None:
                grad = grad * mask
            delta = grad * activation_grad(z, out, self.layers[i].activation)
            terms[i] = (delta, a_in)
            grad = delta @ self.layers[i].weight
        return grad, terms

    def to_dict(self):
        return {
            "dropout": self.dropout,
            "layers": [
                {"in": l.n_in, "out": l.n_out, "activation": l.activation}
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, spec, flat=None):
        layers = [
            Layer(np.zeros((d["out"], d["in"])), np.zeros(d["out"]), d["activation"])
            for d in spec["layers"]
        ]
        net = cls(layers, dropout=spec.get("dropout", 0.0))
        if flat is not None:
            net.set_flat_params(flat)
        return net


def per_sample_gradients(layers, terms, indices=None):
    """Per-sample gradient matrix (n x k) for the flat ``indices``.

    ``terms`` are the ``(delta, a_in)`` pairs of a backward pass aligned with
    ``layers``; a ``None`` entry means the loss does not reach that layer.
    """
    n = next(t[0].shape[0] for t in terms if t is not None)
    offsets, pos = [], 0
    for layer in layers:
        offsets.append(pos)
        pos += layer.n_params
    total = pos
    if indices is None:
        indices = np.arange(total)
    indices = np.asarray(indices, dtype=np.int64)
    out = np.zeros((n, indices.size))
    for layer, start, term in zip(layers, offsets, terms):
        stop = start + layer.n_params
        lo, hi = np.searchsorted(indices, [start, stop])
        if lo == hi or term is None:
            continue
        delta, a_in = term
        local = indices[lo:hi] - start
        nw = layer.weight.size
        w_local = local[local < nw]
        b_local = local[local >= nw] - nw
        cols = []
        if w_local.size:
            rows, inner = np.divmod(w_local, layer.n_in)
            cols.append(delta[:, rows] * a_in[:, inner])
        if b_local.size:
            cols.append(delta[:, b_local])
        out[:, lo:hi] = np.hstack(cols) if len(cols) > 1 else cols[0]
    return out


def mean_gradient(layers, terms, normalizer):
    """Flat gradient of ``sum(per-sample losses) / normalizer``."""
    parts = []
    for layer, term in zip(layers, terms):
        if term is None:
            parts.append(np.zeros(layer.n_params))
            continue
        delta, a_in = term
        parts.append(np.concatenate([(delta.T @ a_in).ravel(), delta.sum(axis=0)]))
    return np.concatenate(parts) / normalizer
