"""
Complex-valued graph layers.

- ``chal_forward``: heterogeneous graph attention with node-level attention per edge
  type, multi-head concatenation, semantic attention across edge types and a residual.
- ``cgal_forward``: graph attention over the BS-UE link graph with a residual from the
  previous layer and a skip from the layer-0 input.
- ``cfl_forward``: fully-connected complex layer followed by complex batch norm.

Feature tensors are shaped (T, nodes, features). Parameter shapes depend only on
feature widths and head counts, never on the number of nodes.
"""
import itertools
import logging
from dataclasses import dataclass, field, fields, is_dataclass

import numpy as np

from . import autodiff as ad
from .exceptions import ConfigError, ShapeError


logger = logging.getLogger(__name__)

NODE_TYPES = ("bs", "ue", "ris")
EDGE_TYPES = tuple(itertools.permutations(NODE_TYPES, 2))
BN_MOMENTUM = 0.1
BN_EPS = 1e-5
MASKED_SCORE = -1e9


@dataclass(frozen=True)
class LayerFlags:
    """Ablation switches shared by the attention layers."""

    message_passing: bool = True
    residual: bool = True

    def __post_init__(self):
        if not (self.message_passing or self.residual):
            raise ConfigError("message passing and residual connections cannot both be disabled")


@dataclass
class CHALParams:
    """Weights of one heterogeneous attention layer.

    Attributes:
        W: node type -> (heads, in_dim, out_dim / heads) transforms.
        a: "src-dst" edge type -> (heads, 2 * out_dim / heads) attention vectors.
        W_bar: (out_dim, out_dim) semantic transform.
        q: (out_dim,) semantic query.
        W_hat: node type -> (in_dim, out_dim) residual transforms.
    """

    W: dict
    a: dict
    W_bar: ad.CTensor
    q: ad.CTensor
    W_hat: dict

    @property
    def heads(self):
        return next(iter(self.W.values())).shape[0]

    @property
    def out_dim(self):
        return self.W_bar.shape[0]


@dataclass
class CGALParams:
    """Weights of one link-graph attention layer."""

    W: ad.CTensor
    a: ad.CTensor
    W_bar: ad.CTensor
    W_hat: ad.CTensor


@dataclass
class BatchNormParams:
    gamma: ad.CTensor
    beta: ad.CTensor
    running_mean: np.ndarray
    running_var: np.ndarray


@dataclass
class CFLParams:
    """Fully-connected layer. ``activate=False`` turns it into a plain linear projection."""

    W: ad.CTensor
    bias: ad.CTensor
    bn: BatchNormParams = None
    activate: bool = True


def edge_key(src, dst):
    return f"{src}-{dst}"


def named_parameters(obj, prefix=""):
    """(name, CTensor) pairs of every learnable leaf below ``obj``, in a stable order."""
    if isinstance(obj, ad.CTensor):
        if obj.requires_grad:
            yield prefix, obj
    elif is_dataclass(obj):
        for f in fields(obj):
            yield from named_parameters(getattr(obj, f.name), f"{prefix}.{f.name}" if prefix else f.name)
    elif isinstance(obj, dict):
        for key in sorted(obj):
            yield from named_parameters(obj[key], f"{prefix}.{key}" if prefix else str(key))
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from named_parameters(item, f"{prefix}.{i}" if prefix else str(i))


def named_buffers(obj, prefix=""):
    """(name, BatchNormParams, attribute) triples of every running statistic below ``obj``."""
    if isinstance(obj, BatchNormParams):
        yield f"{prefix}.running_mean", obj, "running_mean"
        yield f"{prefix}.running_var", obj, "running_var"
    elif is_dataclass(obj):
        for f in fields(obj):
            yield from named_buffers(getattr(obj, f.name), f"{prefix}.{f.name}" if prefix else f.name)
    elif isinstance(obj, dict):
        for key in sorted(obj):
            yield from named_buffers(obj[key], f"{prefix}.{key}" if prefix else str(key))
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from named_buffers(item, f"{prefix}.{i}" if prefix else str(i))


def _check_width(x, width, what):
    if x.shape[-1] != width:
        raise ShapeError(f"{what}: expected feature width {width}, got {x.shape[-1]}")


def _heads(x, W):
    """Per-head projections (T, heads, nodes, width) of features (T, nodes, in_dim)."""
    _check_width(x, W.shape[1], "attention input")
    return ad.einsum("tis,dsh->tdih", x, W)


def _attention_scores(h_dst, h_src, a):
    """LeakyReLU(Re(a^T [h_i, h_j])) for every pair, shape (T, heads, n_dst, n_src)."""
    width = h_dst.shape[-1]
    left = ad.einsum("tdih,dh->tdi", h_dst, a[:, :width])
    right = ad.einsum("tdjh,dh->tdj", h_src, a[:, width:])
    T, D, n_dst = left.shape
    n_src = right.shape[-1]
    pairs = ad.add(ad.reshape(left, (T, D, n_dst, 1)), ad.reshape(right, (T, D, 1, n_src)))
    return ad.leaky_relu(pairs)


def _merge_heads(x):
    T, D, n, h = x.shape
    return ad.reshape(ad.transpose(x, (0, 2, 1, 3)), (T, n, D * h))


def chal_forward(features, params, flags=LayerFlags(), return_attention=False):
    """
    One heterogeneous attention layer.

    ``features`` maps node type to (T, nodes, in_dim). Every pair of present, distinct
    node types forms an edge type over a complete bipartite graph. Returns the updated
    features per node type and, with ``return_attention``, the node-level coefficients
    per edge type and the semantic coefficients per node type.
    """
    present = [t for t in NODE_TYPES if t in features and features[t].shape[1] > 0]
    projected = {t: _heads(features[t], params.W[t]) for t in present} if flags.message_passing else {}
    node_attention, semantic_attention, outputs = {}, {}, {}

    for dst in present:
        x = features[dst]
        T, n = x.shape[0], x.shape[1]
        terms = []
        if flags.message_passing:
            paths, scores = [], []
            for src in present:
                if src == dst:
                    continue
                key = edge_key(dst, src)
                coeff = ad.softmax(_attention_scores(projected[dst], projected[src], params.a[key]), axis=-1)
                node_attention[key] = coeff
                heads = ad.crelu(ad.einsum("tdij,tdjh->tdih", coeff, projected[src]))
                path = _merge_heads(heads)
                squashed = ad.tanh(ad.real(ad.matmul(path, params.W_bar)))
                score = ad.mean(ad.real(ad.einsum("tis,s->ti", squashed, params.q)), axis=1)
                paths.append(path)
                scores.append(score)
            if paths:
                beta = ad.softmax(ad.stack(scores, axis=-1), axis=-1)
                semantic_attention[dst] = beta
                for p, path in enumerate(paths):
                    terms.append(ad.mul(ad.reshape(beta[:, p], (T, 1, 1)), path))
        if flags.residual or not terms:
            _check_width(x, params.W_hat[dst].shape[0], "residual input")
            terms.append(ad.matmul(x, params.W_hat[dst]))
        total = terms[0]
        for term in terms[1:]:
            total = ad.add(total, term)
        outputs[dst] = ad.crelu(total)

    if return_attention:
        return outputs, node_attention, semantic_attention
    return outputs


def link_graph_adjacency(B, K):
    """
    Adjacency of the BS-UE link graph; node b*K + k stands for the pair (b, k).

    Pairs sharing a UE (different BSs) and pairs sharing a BS (different UEs) are
    connected.
    """
    b = np.repeat(np.arange(B), K)
    k = np.tile(np.arange(K), B)
    same_ue = (k[:, None] == k[None, :]) & (b[:, None] != b[None, :])
    same_bs = (b[:, None] == b[None, :]) & (k[:, None] != k[None, :])
    return same_ue | same_bs


def cgal_forward(x, x0, adjacency, params, flags=LayerFlags(), return_attention=False):
    """
    One link-graph attention layer on features ``x`` (T, nodes, in_dim); ``x0`` is the
    layer-0 input used by the skip term.
    """
    adjacency = np.asarray(adjacency, dtype=bool)
    n = x.shape[1]
    if adjacency.shape != (n, n):
        raise ShapeError(f"adjacency of shape {adjacency.shape} does not match {n} nodes")
    terms, coeff = [], None
    if flags.message_passing:
        _check_width(x, params.W.shape[0], "attention input")
        h = ad.matmul(x, params.W)
        width = h.shape[-1]
        left = ad.einsum("tih,h->ti", h, params.a[:width])
        right = ad.einsum("tjh,h->tj", h, params.a[width:])
        T = x.shape[0]
        pairs = ad.leaky_relu(ad.add(ad.reshape(left, (T, n, 1)), ad.reshape(right, (T, 1, n))))
        masked = ad.where(adjacency, pairs, np.full(pairs.shape, MASKED_SCORE))
        coeff = ad.mul(ad.softmax(masked, axis=-1), adjacency.astype(float))
        terms.append(ad.crelu(ad.matmul(coeff, h)))
    if flags.residual or not terms:
        _check_width(x, params.W_bar.shape[0], "residual input")
        terms.append(ad.matmul(x, params.W_bar))
        terms.append(ad.matmul(x0, params.W_hat))
    total = terms[0]
    for term in terms[1:]:
        total = ad.add(total, term)
    if return_attention:
        return total, coeff
    return total


def complex_batch_norm(x, params, mode="train"):
    """
    Per-feature complex standardization over samples and nodes, then a complex affine.

    Train mode uses batch statistics and updates the running ones; eval mode uses the
    running statistics.
    """
    T, n = x.shape[0], x.shape[1]
    if T * n == 0:
        raise ShapeError("batch norm needs a non-empty batch")
    if mode == "train":
        mu = ad.mean(x, axis=(0, 1))
        centered = ad.sub(x, mu)
        var = ad.mean(ad.abs2(centered), axis=(0, 1))
        with ad.no_grad():
            params.running_mean = (1 - BN_MOMENTUM) * params.running_mean + BN_MOMENTUM * mu.numpy()
            params.running_var = (1 - BN_MOMENTUM) * params.running_var + BN_MOMENTUM * var.numpy().real
        scaled = ad.div(centered, ad.sqrt(ad.add(var, BN_EPS)))
    else:
        centered = ad.sub(x, params.running_mean)
        scaled = ad.scale(centered, 1.0 / np.sqrt(params.running_var + BN_EPS))
    return ad.add(ad.mul(scaled, params.gamma), params.beta)


def cfl_forward(x, params, mode="train"):
    """CReLU(x W + b) followed by complex batch norm; a linear projection when not activated."""
    _check_width(x, params.W.shape[0], "fully-connected input")
    out = ad.add(ad.matmul(x, params.W), params.bias)
    if not params.activate:
        return out
    out = ad.crelu(out)
    if params.bn is not None:
        out = complex_batch_norm(out, params.bn, mode)
    return out


def complex_kaiming(rng, shape, fan_in, name=None):
    """Complex weights whose real and imaginary parts are N(0, 1 / (2 fan_in))."""
    std = np.sqrt(1.0 / (2.0 * fan_in))
    values = rng.normal(0.0, std, shape) + 1j * rng.normal(0.0, std, shape)
    return ad.CTensor(values, requires_grad=True, name=name)


def _zeros(shape):
    return ad.CTensor(np.zeros(shape), requires_grad=True)


def init_batch_norm(width):
    return BatchNormParams(
        gamma=ad.CTensor(np.ones(width), requires_grad=True),
        beta=_zeros(width),
        running_mean=np.zeros(width, dtype=np.complex128),
        running_var=np.ones(width),
    )


def init_chal(in_dims, out_dim, heads, rng):
    """CHAL weights for node-type input widths ``in_dims`` (type -> width)."""
    if out_dim % heads:
        raise ConfigError(f"hidden width {out_dim} is not divisible by {heads} heads")
    width = out_dim // heads
    return CHALParams(
        W={t: complex_kaiming(rng, (heads, in_dims[t], width), in_dims[t]) for t in NODE_TYPES},
        a={edge_key(d, s): complex_kaiming(rng, (heads, 2 * width), 2 * width) for d, s in EDGE_TYPES},
        W_bar=complex_kaiming(rng, (out_dim, out_dim), out_dim),
        q=complex_kaiming(rng, (out_dim,), out_dim),
        W_hat={t: complex_kaiming(rng, (in_dims[t], out_dim), in_dims[t]) for t in NODE_TYPES},
    )


def init_cgal(in_dim, out_dim, base_dim, rng):
    return CGALParams(
        W=complex_kaiming(rng, (in_dim, out_dim), in_dim),
        a=complex_kaiming(rng, (2 * out_dim,), 2 * out_dim),
        W_bar=complex_kaiming(rng, (in_dim, out_dim), in_dim),
        W_hat=complex_kaiming(rng, (base_dim, out_dim), base_dim),
    )


def init_cfl(in_dim, out_dim, rng, activate=True):
    return CFLParams(
        W=complex_kaiming(rng, (in_dim, out_dim), in_dim),
        bias=_zeros(out_dim),
        bn=init_batch_norm(out_dim) if activate else None,
        activate=activate,
    )


def init_cfl_stack(in_dim, hidden, out_dim, count, rng, enabled=True):
    """``count`` fully-connected layers ending at ``out_dim``, or one linear projection when disabled."""
    if not enabled:
        return [init_cfl(in_dim, out_dim, rng, activate=False)]
    widths = [in_dim] + [hidden] * (count - 1) + [out_dim]
    return [init_cfl(widths[i], widths[i + 1], rng) for i in range(count)]


def cfl_stack_forward(x, stack, mode="train"):
    for layer in stack:
        x = cfl_forward(x, layer, mode)
    return x
