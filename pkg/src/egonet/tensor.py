"""Dense tensors with reverse-mode autodiff for the operators the model needs.

A ``Tensor`` wraps a numpy array and remembers how it was produced; calling
:func:`backward` on a scalar loss walks the recorded graph in reverse
topological order and accumulates gradients into every reachable tensor
created with ``requires_grad=True``.

The default element type is float64 so gradient checks are meaningful;
``set_default_dtype(np.float32)`` trades precision for speed.
"""

import csv

import numpy as np

from . import _kernels

_DEFAULT_DTYPE = np.float64


def default_dtype():
    return _DEFAULT_DTYPE


def set_default_dtype(dtype):
    """Switch the element type for newly created tensors (float32/float64)."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}; use float32 or float64")
    _DEFAULT_DTYPE = dtype.type


class Tensor:
    """A node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward",
                 "_backward_ran")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._backward_ran = False

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.grad is not None})"

    def backward(self):
        backward(self)


def _make_node(data, parents, backward_fn):
    out = Tensor(data, dtype=np.asarray(data).dtype)
    live = tuple(p for p in parents if p.requires_grad or p._parents)
    if live:
        out.requires_grad = True  # participates in the graph
        out._parents = live
        out._backward = backward_fn
    return out


def _accum(t, g):
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def backward(loss):
    """Propagate gradients from a scalar loss to every reachable tensor.

    Rejects non-scalar roots, and rejects a second backward pass through
    the same graph (the saved forward context is single-use).
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if loss._backward_ran:
        raise RuntimeError("backward was already run on this graph; rerun the forward pass first")
    loss._backward_ran = True

    topo = []
    seen = set()

    def visit(node):
        if id(node) in seen:
            return
        seen.add(id(node))
        for p in node._parents:
            visit(p)
        topo.append(node)

    visit(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# operators


def conv2d(x, w, b, stride=1, pad=0, dilation=1):
    """2D convolution (cross-correlation) with zero padding and dilation.

    x: B x C x H x W, w: O x C x kH x kW, b: O. Output spatial size is
    floor((H + 2*pad - dilation*(kH-1) - 1) / stride) + 1, likewise for W.
    """
    if stride < 1 or dilation < 1 or pad < 0:
        raise ValueError(f"invalid conv hyperparameters: stride={stride} pad={pad} dilation={dilation}")
    B, C, H, W = x.data.shape
    O, CW, KH, KW = w.data.shape
    if C != CW:
        raise ValueError(f"conv2d channel mismatch: input {x.data.shape} vs weight {w.data.shape}")
    if b.data.shape != (O,):
        raise ValueError(f"conv2d bias shape {b.data.shape} does not match {O} output channels")
    OH = (H + 2 * pad - dilation * (KH - 1) - 1) // stride + 1
    OW = (W + 2 * pad - dilation * (KW - 1) - 1) // stride + 1
    if OH < 1 or OW < 1:
        raise ValueError(f"conv2d output would be empty: input {x.data.shape}, kernel {w.data.shape}, "
                         f"stride={stride} pad={pad} dilation={dilation}")

    dt = x.data.dtype
    xp = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=dt)
    xp[:, :, pad:pad + H, pad:pad + W] = x.data
    out = np.empty((B, O, OH, OW), dtype=dt)
    _kernels.conv2d_forward(xp, w.data, b.data, stride, dilation, out)

    def backward_fn(dy):
        dy = np.ascontiguousarray(dy)
        if x.requires_grad or x._parents:
            dxp = np.empty_like(xp)
            if stride == 1:
                # For stride 1 the input gradient is a full convolution of dy
                # with the flipped, channel-transposed kernel; reuse the fast
                # forward kernel.
                halo = dilation * (KH - 1), dilation * (KW - 1)
                dyp = np.zeros((B, O, OH + 2 * halo[0], OW + 2 * halo[1]), dtype=dt)
                dyp[:, :, halo[0]:halo[0] + OH, halo[1]:halo[1] + OW] = dy
                wt = np.ascontiguousarray(w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
                _kernels.conv2d_forward(dyp, wt, np.zeros(C, dtype=dt), 1, dilation, dxp)
            else:
                _kernels.conv2d_backward_input(dy, w.data, stride, dilation, dxp)
            _accum(x, dxp[:, :, pad:pad + H, pad:pad + W])
        if w.requires_grad or w._parents:
            dw = np.empty_like(w.data)
            _kernels.conv2d_backward_weight(xp, dy, stride, dilation, dw)
            _accum(w, dw)
        if b.requires_grad or b._parents:
            _accum(b, dy.sum(axis=(0, 2, 3)))

    return _make_node(out, (x, w, b), backward_fn)


def relu(x):
    out = np.maximum(x.data, 0)

    def backward_fn(dy):
        _accum(x, dy * (x.data > 0))

    return _make_node(out, (x,), backward_fn)


def maxpool2d(x, k, stride=None, pad=0):
    """Window maxima over k x k windows; padding acts as -inf."""
    if stride is None:
        stride = k
    if k < 1 or stride < 1 or pad < 0:
        raise ValueError(f"invalid pool hyperparameters: k={k} stride={stride} pad={pad}")
    if pad >= k:
        raise ValueError(f"pool pad {pad} must be smaller than window {k}")
    B, C, H, W = x.data.shape
    OH = (H + 2 * pad - k) // stride + 1
    OW = (W + 2 * pad - k) // stride + 1
    if OH < 1 or OW < 1:
        raise ValueError(f"maxpool2d output would be empty for input {x.data.shape} with k={k} stride={stride}")
    out = np.empty((B, C, OH, OW), dtype=x.data.dtype)
    argmax = np.empty((B, C, OH, OW), dtype=np.int64)
    _kernels.maxpool2d_forward(x.data, k, stride, pad, out, argmax)

    def backward_fn(dy):
        dx = np.zeros_like(x.data)
        _kernels.maxpool2d_backward(np.ascontiguousarray(dy), argmax, W, dx)
        _accum(x, dx)

    return _make_node(out, (x,), backward_fn)


def concat_channels(xs):
    """Stack tensors along the channel axis, preserving input order."""
    if len(xs) == 0:
        raise ValueError("concat_channels needs at least one input")
    ref = xs[0].data.shape
    for t in xs[1:]:
        s = t.data.shape
        if len(s) != len(ref) or s[0] != ref[0] or s[2:] != ref[2:]:
            raise ValueError(f"concat_channels shape mismatch: {ref} vs {s}")
    out = np.concatenate([t.data for t in xs], axis=1)
    sizes = [t.data.shape[1] for t in xs]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(dy):
        for t, lo, hi in zip(xs, offsets[:-1], offsets[1:]):
            if t.requires_grad or t._parents:
                _accum(t, dy[:, lo:hi])

    return _make_node(out, tuple(xs), backward_fn)


def dropout(x, rate, training, rng):
    """Inverted dropout: zero with probability ``rate``, scale survivors.

    Identity in inference mode. The mask comes from ``rng`` and is kept
    for the backward pass.
    """
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        out = x.data.copy()

        def backward_fn(dy):
            _accum(x, dy)

        return _make_node(out, (x,), backward_fn)

    keep = (rng.random(x.data.shape) >= rate)
    scale = x.data.dtype.type(1.0 / (1.0 - rate))
    mask = keep.astype(x.data.dtype) * scale
    out = x.data * mask

    def backward_fn(dy):
        _accum(x, dy * mask)

    return _make_node(out, (x,), backward_fn)


def _upsample_matrix(n, factor, dtype):
    m = n * factor
    U = np.zeros((m, n), dtype=dtype)
    if n == 1:
        U[:, 0] = 1.0
        return U
    scale = (n - 1) / (m - 1)
    for i in range(m):
        src = i * scale
        lo = int(np.floor(src))
        lo = min(lo, n - 2)
        f = src - lo
        U[i, lo] = 1.0 - f
        U[i, lo + 1] = f
    return U


def bilinear_upsample(x, factor):
    """Align-corners bilinear upsampling by an integer factor.

    Corner output pixels equal corner input pixels exactly.
    """
    if factor < 1:
        raise ValueError(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        def backward_id(dy):
            _accum(x, dy)
        return _make_node(x.data.copy(), (x,), backward_id)
    B, C, H, W = x.data.shape
    dt = x.data.dtype
    Uh = _upsample_matrix(H, factor, dt)
    Uw = _upsample_matrix(W, factor, dt)
    # Separable linear map: out = Uh @ x @ Uw^T per image/channel.
    out = np.einsum("ph,bchw,qw->bcpq", Uh, x.data, Uw, optimize=True)

    def backward_fn(dy):
        _accum(x, np.einsum("ph,bcpq,qw->bchw", Uh, dy, Uw, optimize=True))

    return _make_node(out, (x,), backward_fn)


def pixel_softmax_loss(logits, labels):
    """Two-class per-pixel softmax cross-entropy.

    logits: B x 2 x H x W; labels: B x H x W of {0, 1}. Returns the mean
    negative log probability of the labeled class over all B*H*W pixels
    (a scalar graph node) and the softmax probabilities as an array.
    """
    B, K, H, W = logits.data.shape
    if K != 2:
        raise ValueError(f"expected 2 logit channels, got {K}")
    labels = np.asarray(labels)
    if labels.shape != (B, H, W):
        raise ValueError(f"label shape {labels.shape} does not match logits {logits.data.shape}")
    if not np.all((labels == 0) | (labels == 1)):
        bad = labels[(labels != 0) & (labels != 1)].flat[0]
        raise ValueError(f"labels must be in {{0, 1}}, found {bad!r}")
    if not np.all(np.isfinite(logits.data)):
        raise ValueError("non-finite logits")

    z = logits.data
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    logp = (z - m) - np.log(e.sum(axis=1, keepdims=True))
    probs = np.exp(logp)
    onehot = np.stack([labels == 0, labels == 1], axis=1).astype(z.dtype)
    n = B * H * W
    loss_val = -(onehot * logp).sum() / n

    def backward_fn(dy):
        _accum(logits, (probs - onehot) * (dy / n))

    node = _make_node(np.asarray(loss_val, dtype=z.dtype), (logits,), backward_fn)
    return node, probs


# ---------------------------------------------------------------------------
# verification helpers


def grad_check(build_loss, params, eps=1e-5, tol=1e-4):
    """Compare reverse-mode gradients against central finite differences.

    ``build_loss()`` must rebuild the forward graph from the current
    ``.data`` of each tensor in ``params`` (a name -> Tensor mapping) and
    return the scalar loss. Returns per-parameter max relative error and
    the list of parameters exceeding ``tol``.
    """
    for p in params.values():
        p.grad = None
    loss = build_loss()
    backward(loss)
    analytic = {k: (np.zeros_like(p.data) if p.grad is None else np.array(p.grad, copy=True))
                for k, p in params.items()}

    report = {}
    failures = []
    for name, p in params.items():
        flat = p.data.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(build_loss().data)
            flat[i] = orig - eps
            f_minus = float(build_loss().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2 * eps)
            a = analytic[name].reshape(-1)[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            worst = max(worst, rel)
        report[name] = worst
        if worst > tol:
            failures.append(name)
    return report, failures


def dump_csv(tensor, path):
    """Write a tensor as (indices..., value) rows for debugging."""
    arr = tensor.data if isinstance(tensor, Tensor) else np.asarray(tensor)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"i{d}" for d in range(arr.ndim)] + ["value"])
        for idx in np.ndindex(*arr.shape):
            writer.writerow(list(idx) + [repr(arr[idx])])
