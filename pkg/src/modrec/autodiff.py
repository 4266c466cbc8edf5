"""Dense-tensor reverse-mode automatic differentiation on numpy arrays.

A `Tensor` wraps a contiguous row-major numpy array. Operations record a
graph node holding parent references and a closure that maps the output
gradient to parent gradients; `backward` walks the graph once in reverse
topological order and accumulates into `.grad`. The primitive set covers
exactly what the classifier forward pass and AdamW training need: matmul
(with batch broadcasting), conv1d, elementwise add/mul, relu/sigmoid/tanh,
softmax/log_softmax, layer_norm, dropout, reductions, concat, transpose,
reshape and basic slicing.

Training runs in float32; gradient checks switch the default dtype to
float64 via `set_default_dtype`. Every op output is checked for NaN/Inf
unless disabled with `set_finite_checks(False)`.
"""

import math

import numpy as np

_default_dtype = np.float32
_finite_checks = True


def set_default_dtype(dtype):
    """Set the dtype used for new tensors and parameters. Returns the previous one."""
    global _default_dtype
    previous = _default_dtype
    _default_dtype = np.dtype(dtype).type
    if _default_dtype not in (np.float32, np.float64):
        _default_dtype = previous
        raise ValueError("default dtype must be float32 or float64")
    return previous


def get_default_dtype():
    return _default_dtype


def set_finite_checks(enabled: bool) -> bool:
    """Enable/disable NaN/Inf checking of op outputs. Returns the previous setting."""
    global _finite_checks
    previous = _finite_checks
    _finite_checks = bool(enabled)
    return previous


_grad_enabled = True


class no_grad:
    """Context manager that skips graph construction (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._previous = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._previous
        return False


class Tensor:
    """Multi-dimensional value participating in a reverse-mode graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_grad_fn", "_backward_done")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(_default_dtype)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._grad_fn = None
        self._backward_done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; heavy lifting lives in the module-level ops
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(other, -1.0) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        return add(scale(self, -1.0), other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return tslice(self, key)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def _node(data, parents, grad_fn, op_name):
    """Wrap an op result; graph edges only kept when a parent needs gradients."""
    if _finite_checks and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values in output of {op_name}")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._backward_done = False
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._grad_fn = grad_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._grad_fn = None
    return out


def _unbroadcast(grad, shape):
    """Reduce a broadcasted gradient back to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _as_const(value, like):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


# ---------------------------------------------------------------------------
# primitives


def add(a, b):
    """Elementwise sum with numpy broadcasting."""
    b = _as_const(b, a)
    data = a.data + b.data

    def grad_fn(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))

    return _node(data, (a, b), grad_fn, "add")


def mul(a, b):
    """Elementwise product with numpy broadcasting."""
    b = _as_const(b, a)
    data = a.data * b.data

    def grad_fn(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), grad_fn, "mul")


def scale(x, k):
    """Multiply by a python scalar constant."""
    k = float(k)
    data = x.data * np.asarray(k, dtype=x.dtype)

    def grad_fn(g):
        return (g * k,)

    return _node(data, (x,), grad_fn, "scale")


def matmul(a, b):
    """Matrix product; leading batch dimensions broadcast as in np.matmul."""
    data = np.matmul(a.data, b.data)

    def grad_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (_unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape))

    return _node(data, (a, b), grad_fn, "matmul")


def conv1d(x, w, b=None, stride=1, padding=0):
    """1-D convolution over (batch, length, channels) input.

    Weight is (kernel, in_channels, out_channels). Output length is
    floor((L_in + 2*padding - kernel) / stride) + 1.
    """
    batch, length, c_in = x.data.shape
    kernel, wc_in, c_out = w.data.shape
    if wc_in != c_in:
        raise ValueError(f"conv1d channel mismatch: input {c_in}, weight {wc_in}")
    xp = np.pad(x.data, ((0, 0), (padding, padding), (0, 0))) if padding else x.data
    l_out = (length + 2 * padding - kernel) // stride + 1
    if l_out < 1:
        raise ValueError(f"conv1d output length {l_out} < 1 (input {length}, kernel {kernel})")
    span = stride * (l_out - 1) + 1
    data = np.zeros((batch, l_out, c_out), dtype=x.dtype)
    for t in range(kernel):
        data += np.matmul(xp[:, t:t + span:stride, :], w.data[t])
    if b is not None:
        data += b.data

    def grad_fn(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w.data)
        g2 = g.reshape(-1, c_out)
        for t in range(kernel):
            window = slice(t, t + span, stride)
            gw[t] = xp[:, window, :].reshape(-1, c_in).T @ g2
            gxp[:, window, :] += np.matmul(g, w.data[t].T)
        gx = gxp[:, padding:padding + length, :] if padding else gxp
        if b is None:
            return (gx, gw)
        return (gx, gw, g.sum(axis=(0, 1)))

    parents = (x, w) if b is None else (x, w, b)
    return _node(data, parents, grad_fn, "conv1d")


def relu(x):
    data = np.maximum(x.data, 0)

    def grad_fn(g):
        return (g * (x.data > 0),)

    return _node(data, (x,), grad_fn, "relu")


def sigmoid(x):
    # exp of a non-positive argument only, so no overflow at float32
    e = np.exp(-np.abs(x.data))
    data = np.where(x.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def grad_fn(g):
        return (g * data * (1.0 - data),)

    return _node(data, (x,), grad_fn, "sigmoid")


def tanh(x):
    data = np.tanh(x.data)

    def grad_fn(g):
        return (g * (1.0 - data * data),)

    return _node(data, (x,), grad_fn, "tanh")


def softmax(x, axis=-1):
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        return (data * (g - inner),)

    return _node(data, (x,), grad_fn, "softmax")


def log_softmax(x, axis=-1):
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - log_z

    def grad_fn(g):
        return (g - np.exp(data) * g.sum(axis=axis, keepdims=True),)

    return _node(data, (x,), grad_fn, "log_softmax")


def layer_norm(x, gain, bias, axis=-1, eps=1e-5):
    """Normalize over one axis, then apply a learnable per-feature gain and bias."""
    n = x.data.shape[axis]
    if gain.data.shape != (n,) or bias.data.shape != (n,):
        raise ValueError("layer_norm gain/bias must be 1-D of the normalized axis length")
    bshape = [1] * x.data.ndim
    bshape[axis] = n
    gain_b = gain.data.reshape(bshape)
    mu = x.data.mean(axis=axis, keepdims=True)
    centered = x.data - mu
    var = np.mean(centered * centered, axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    data = xhat * gain_b + bias.data.reshape(bshape)

    def grad_fn(g):
        dxhat = g * gain_b
        gx = inv * (dxhat
                    - dxhat.mean(axis=axis, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=axis, keepdims=True))
        reduce_axes = tuple(i for i in range(x.data.ndim) if i != axis % x.data.ndim)
        return (gx.astype(x.dtype, copy=False),
                (g * xhat).sum(axis=reduce_axes),
                g.sum(axis=reduce_axes))

    return _node(data, (x, gain, bias), grad_fn, "layer_norm")


def dropout(x, p, train, rng=None):
    """Inverted dropout: scales kept activations by 1/(1-p) at train time."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode needs an rng")
    draw_dtype = np.float32 if x.dtype == np.float32 else np.float64
    keep = rng.random(x.data.shape, dtype=draw_dtype) >= p
    mask = keep.astype(x.dtype)
    mask *= np.asarray(1.0 / (1.0 - p), dtype=x.dtype)
    data = x.data * mask

    def grad_fn(g):
        return (g * mask,)

    return _node(data, (x,), grad_fn, "dropout")


def tsum(x, axis=None, keepdims=False):
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.data.shape).astype(x.dtype, copy=False),)

    return _node(np.asarray(data), (x,), grad_fn, "sum")


def tmean(x, axis=None, keepdims=False):
    data = x.data.mean(axis=axis, keepdims=keepdims)
    count = x.data.size if axis is None else x.data.shape[axis]

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((np.broadcast_to(g, x.data.shape) / count).astype(x.dtype, copy=False),)

    return _node(np.asarray(data), (x,), grad_fn, "mean")


def concat(tensors, axis=0):
    tensors = tuple(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _node(data, tensors, grad_fn, "concat")


def transpose(x, axes=None):
    data = np.transpose(x.data, axes)
    inverse = None if axes is None else np.argsort(axes)

    def grad_fn(g):
        return (np.transpose(g, inverse),)

    return _node(data, (x,), grad_fn, "transpose")


def reshape(x, shape):
    data = x.data.reshape(shape)

    def grad_fn(g):
        return (g.reshape(x.data.shape),)

    return _node(data, (x,), grad_fn, "reshape")


def tslice(x, key):
    """Basic indexing (slices / ints); gradient scatters back into zeros."""
    data = x.data[key]

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        gx[key] = g
        return (gx,)

    return _node(data, (x,), grad_fn, "slice")


def embedding_add(x, table):
    """Add a learnable (L, d) table to (batch, L, d) activations."""
    return add(x, table)


def _sigmoid_np(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def lstm_layer(x, w_ih, w_hh, b_ih, b_hh):
    """One unidirectional LSTM layer over (batch, L, d_in) with zero initial state.

    Standard cell, gate order i, f, g, o:

        i = sigmoid(a_i)  f = sigmoid(a_f)  g = tanh(a_g)  o = sigmoid(a_o)
        c_t = f * c_{t-1} + i * g           h_t = o * tanh(c_t)

    where a = x_t W_ih + b_ih + h_{t-1} W_hh + b_hh. Returns the full hidden
    sequence (batch, L, H). The recurrence runs as a fused op with hand-rolled
    backprop through time, which keeps the graph small and the loop in numpy.
    """
    batch, length, d_in = x.data.shape
    h4 = w_ih.data.shape[1]
    h_dim = h4 // 4
    dtype = x.data.dtype

    gates_in = (x.data.reshape(batch * length, d_in) @ w_ih.data
                + (b_ih.data + b_hh.data)).reshape(batch, length, h4)
    acts = np.empty((batch, length, h4), dtype=dtype)
    cells = np.empty((batch, length, h_dim), dtype=dtype)
    tanh_c = np.empty((batch, length, h_dim), dtype=dtype)
    hidden = np.empty((batch, length, h_dim), dtype=dtype)
    h = np.zeros((batch, h_dim), dtype=dtype)
    c = np.zeros((batch, h_dim), dtype=dtype)
    for t in range(length):
        a = gates_in[:, t] + h @ w_hh.data
        i_g = _sigmoid_np(a[:, :h_dim])
        f_g = _sigmoid_np(a[:, h_dim:2 * h_dim])
        g_g = np.tanh(a[:, 2 * h_dim:3 * h_dim])
        o_g = _sigmoid_np(a[:, 3 * h_dim:])
        c = f_g * c + i_g * g_g
        tc = np.tanh(c)
        h = o_g * tc
        acts[:, t, :h_dim] = i_g
        acts[:, t, h_dim:2 * h_dim] = f_g
        acts[:, t, 2 * h_dim:3 * h_dim] = g_g
        acts[:, t, 3 * h_dim:] = o_g
        cells[:, t] = c
        tanh_c[:, t] = tc
        hidden[:, t] = h

    def grad_fn(g_out):
        dgates = np.empty((batch, length, h4), dtype=dtype)
        dh_next = np.zeros((batch, h_dim), dtype=dtype)
        dc_next = np.zeros((batch, h_dim), dtype=dtype)
        w_hh_t = w_hh.data.T
        for t in range(length - 1, -1, -1):
            i_g = acts[:, t, :h_dim]
            f_g = acts[:, t, h_dim:2 * h_dim]
            g_g = acts[:, t, 2 * h_dim:3 * h_dim]
            o_g = acts[:, t, 3 * h_dim:]
            tc = tanh_c[:, t]
            dh = g_out[:, t] + dh_next
            dc = dh * o_g * (1.0 - tc * tc) + dc_next
            dgates[:, t, 3 * h_dim:] = dh * tc * o_g * (1.0 - o_g)
            if t:
                dgates[:, t, h_dim:2 * h_dim] = dc * cells[:, t - 1] * f_g * (1.0 - f_g)
            else:
                dgates[:, t, h_dim:2 * h_dim] = 0.0
            dgates[:, t, :h_dim] = dc * g_g * i_g * (1.0 - i_g)
            dgates[:, t, 2 * h_dim:3 * h_dim] = dc * i_g * (1.0 - g_g * g_g)
            dh_next = dgates[:, t] @ w_hh_t
            dc_next = dc * f_g
        flat = dgates.reshape(batch * length, h4)
        dx = (flat @ w_ih.data.T).reshape(batch, length, d_in)
        dw_ih = x.data.reshape(batch * length, d_in).T @ flat
        h_prev = np.concatenate(
            [np.zeros((batch, 1, h_dim), dtype=dtype), hidden[:, :-1]], axis=1)
        dw_hh = h_prev.reshape(batch * length, h_dim).T @ flat
        db = flat.sum(axis=0)
        return (dx, dw_ih, dw_hh, db, db.copy())

    return _node(hidden, (x, w_ih, w_hh, b_ih, b_hh), grad_fn, "lstm_layer")


# ---------------------------------------------------------------------------
# backward pass


def _toposort(root):
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited and parent.requires_grad:
                stack.append((parent, False))
    return order


def backward(loss):
    """Run reverse-mode accumulation from a scalar loss.

    Fills `.grad` on every tensor in the graph that requires gradients and
    returns them as a {tensor: ndarray} map. A second call on the same loss
    raises; rebuild the graph (rerun the forward pass) instead.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise RuntimeError("loss does not require grad; graph is detached")
    if loss._backward_done:
        raise RuntimeError("backward already called on this loss; rebuild the graph first")
    loss._backward_done = True

    order = _toposort(loss)
    pending = {id(loss): np.ones_like(loss.data)}
    grads = {}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        grads[node] = node.grad
        if node._grad_fn is None:
            continue
        parent_grads = node._grad_fn(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if pg.dtype != parent.dtype:
                pg = pg.astype(parent.dtype)
            slot = pending.get(id(parent))
            pending[id(parent)] = pg if slot is None else slot + pg
    return grads


# ---------------------------------------------------------------------------
# gradient checking


class GradCheckReport:
    """Worst-case comparison between analytic and central-difference gradients."""

    def __init__(self, max_rel_err, worst_index, analytic, numeric, checked):
        self.max_rel_err = max_rel_err
        self.worst_index = worst_index
        self.analytic = analytic
        self.numeric = numeric
        self.checked = checked

    def __repr__(self):
        return (f"GradCheckReport(max_rel_err={self.max_rel_err:.3e}, "
                f"worst_index={self.worst_index}, analytic={self.analytic:.6g}, "
                f"numeric={self.numeric:.6g}, checked={self.checked})")


def grad_check(f, x, h=1e-5, tol=1e-4, max_checks=None, rng=None):
    """Compare the analytic gradient of scalar-valued f(x) to central differences.

    Checks every coordinate of x unless max_checks caps the count (coordinates
    then sampled without replacement using rng). Returns a GradCheckReport;
    report.max_rel_err <= tol means pass. Run at float64 for meaningful tolerances.
    """
    if not x.requires_grad:
        raise ValueError("grad_check target must require gradients")
    x.zero_grad()
    out = f(x)
    backward(out)
    analytic = x.grad.copy()
    x.zero_grad()

    flat = x.data.reshape(-1)
    indices = np.arange(flat.size)
    if max_checks is not None and max_checks < flat.size:
        gen = rng if rng is not None else np.random.default_rng(0)
        indices = gen.choice(flat.size, size=max_checks, replace=False)

    analytic_flat = analytic.reshape(-1)
    worst = GradCheckReport(0.0, None, 0.0, 0.0, len(indices))
    for idx in indices:
        original = flat[idx]
        flat[idx] = original + h
        f_plus = f(x).data.item()
        flat[idx] = original - h
        f_minus = f(x).data.item()
        flat[idx] = original
        numeric = (f_plus - f_minus) / (2.0 * h)
        a = float(analytic_flat[idx])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1.0)
        if rel >= worst.max_rel_err:
            worst = GradCheckReport(rel, int(idx), a, numeric, len(indices))
    worst.passed = worst.max_rel_err <= tol
    return worst
