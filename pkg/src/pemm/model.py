"""MLP backbone producing the latent features fed to the distance head."""
import numpy as np

from . import autodiff as ad
from .autodiff import ParamSet


def init_mlp(in_dim, widths, out_dim, rng):
    """He-initialized weights ``W0, b0, W1, b1, ...``; the last layer is linear."""
    dims = [in_dim, *widths, out_dim]
    values = {}
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        values[f"W{i}"] = rng.normal(scale=np.sqrt(2.0 / a), size=(a, b))
        values[f"b{i}"] = np.zeros(b)
    return ParamSet(values)


def n_layers(params):
    return sum(1 for k in params if k.startswith("W"))


def mlp_op(leaves, x):
    """Graph version of the forward pass; ``leaves`` maps names to Tensors."""
    L = sum(1 for k in leaves if k.startswith("W"))
    h = ad.as_tensor(x)
    for i in range(L):
        h = ad.add_bias(ad.matmul(h, leaves[f"W{i}"]), leaves[f"b{i}"])
        if i < L - 1:
            h = ad.relu(h)
    return h


def mlp_forward(params, x):
    """Plain numpy forward pass (no graph), for evaluation."""
    L = n_layers(params)
    h = np.asarray(x, dtype=np.float64)
    for i in range(L):
        h = h @ params[f"W{i}"] + params[f"b{i}"]
        if i < L - 1:
            h = np.maximum(h, 0.0)
    return h
