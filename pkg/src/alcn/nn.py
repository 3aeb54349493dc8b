"""A small CNN stack with hand-written reverse-mode gradients.

Layers cache what they need during :meth:`Network.forward` and consume it in
:meth:`Network.backward`. The network takes and returns image batches as
``(batch, channel, row, col)`` float64 arrays; inside, layers work
channels-last. Convolutions are "valid" (no padding) and implemented as
im2col followed by a matrix product.
"""
import io
from dataclasses import dataclass, field

import numpy as np

from . import kernels

MAGIC = b"ALCNMDL1"


class ModelFormatError(Exception):
    """Base class for model file problems."""


class ModelVersionError(ModelFormatError):
    """Wrong magic string or unsupported format version."""


class ModelTruncatedError(ModelFormatError):
    """The parameter payload does not match the header."""


class Tensor:
    """Parameter storage: values plus a same-shaped gradient accumulator."""

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad[...] = 0.0


@dataclass
class LayerSpec:
    kind: str
    args: dict = field(default_factory=dict)

    def to_text(self):
        return " ".join([self.kind] + [f"{k}={v}" for k, v in self.args.items()])

    @classmethod
    def from_text(cls, line):
        kind, *rest = line.split()
        args = {}
        for item in rest:
            k, v = item.split("=", 1)
            args[k] = int(v) if v.lstrip("-").isdigit() else v
        return cls(kind, args)


def _glorot(rng, shape, fan_in, fan_out):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


class Layer:
    params = ()

    def __init__(self):
        self._cache = None
        self._work = {}

    def _buffer(self, name, shape, reuse):
        # training passes reuse scratch arrays; inference allocates fresh ones
        if not reuse:
            return np.empty(shape)
        buf = self._work.get(name)
        if buf is None or buf.shape != shape:
            buf = self._work[name] = np.empty(shape)
        return buf

    def _cached(self):
        if self._cache is None:
            raise RuntimeError(f"{type(self).__name__}.backward called before forward")
        return self._cache


class Conv2D(Layer):
    """Valid convolution on channels-last arrays ``(b, h, w, c)``.

    Weights are stored as ``(k, k, c_in, c_out)`` so the im2col matrix product
    needs no reordering.
    """

    def __init__(self, c_in, c_out, k, rng):
        super().__init__()
        self.k = k
        self.weight = Tensor(_glorot(rng, (k, k, c_in, c_out), c_in * k * k, c_out * k * k))
        self.bias = Tensor(np.zeros(c_out))
        self.params = (self.weight, self.bias)

    def out_shape(self, shape):
        c, h, w = shape
        return (self.weight.shape[3], h - self.k + 1, w - self.k + 1)

    # samples per im2col block; keeps the column matrix cache-resident
    chunk = 4

    def _im2col(self, x, ho, wo, reuse):
        b, _, _, c = x.shape
        k = self.k
        cols = self._buffer(f"cols{b}", (b, ho, wo, k, k, c), reuse)
        kernels.im2col(np.ascontiguousarray(x), k, cols)
        return cols.reshape(b * ho * wo, k * k * c)

    def forward(self, x, cache=True):
        b, h, w, c = x.shape
        k = self.k
        ho, wo = h - k + 1, w - k + 1
        wmat = self.weight.data.reshape(k * k * c, -1)
        out = np.empty((b, ho, wo, wmat.shape[1]))
        for s in range(0, b, self.chunk):
            cols = self._im2col(x[s:s + self.chunk], ho, wo, cache)
            out[s:s + self.chunk] = (cols @ wmat + self.bias.data).reshape(-1, ho, wo, wmat.shape[1])
        if cache:
            self._cache = x
        return out

    def backward(self, dout, need_input_grad=True):
        x = self._cached()
        b, h, w, c = x.shape
        k = self.k
        _, ho, wo, o = dout.shape
        wmat = self.weight.data.reshape(k * k * c, o)
        dw = np.zeros_like(wmat)
        dx = np.zeros((b, h, w, c)) if need_input_grad else None
        for s in range(0, b, self.chunk):
            d = dout[s:s + self.chunk].reshape(-1, o)
            cols = self._im2col(x[s:s + self.chunk], ho, wo, True)
            dw += cols.T @ d
            if need_input_grad:
                n = len(x[s:s + self.chunk])
                dcols = (d @ wmat.T).reshape(n, ho, wo, k, k, c)
                kernels.col2im(dcols, k, dx[s:s + self.chunk])
        self.weight.grad += dw.reshape(self.weight.shape)
        self.bias.grad += dout.reshape(-1, o).sum(axis=0)
        return dx


class MaxPool2D(Layer):
    """Non-overlapping max pooling on channels-last arrays; ties go to the
    first element in row-major order."""

    def __init__(self, size):
        super().__init__()
        self.size = size

    def out_shape(self, shape):
        c, h, w = shape
        return (c, h // self.size, w // self.size)

    def _slices(self, x):
        p = self.size
        ho, wo = x.shape[1] // p, x.shape[2] // p
        return [(a, e, x[:, a:ho * p:p, e:wo * p:p, :]) for a in range(p) for e in range(p)]

    def forward(self, x, cache=True):
        parts = self._slices(x)
        out = parts[0][2]
        for _, _, s in parts[1:]:
            out = np.maximum(out, s)
        if cache:
            self._cache = (x, out)
        return np.ascontiguousarray(out)

    def backward(self, dout, need_input_grad=True):
        x, out = self._cached()
        p = self.size
        ho, wo = out.shape[1:3]
        dx = np.zeros_like(x)
        taken = np.zeros(out.shape, dtype=bool)
        for a, e, s in self._slices(x):
            sel = (s == out) & ~taken
            dx[:, a:ho * p:p, e:wo * p:p, :] = dout * sel
            taken |= sel
        return dx


class Dense(Layer):
    def __init__(self, n_in, n_out, rng):
        super().__init__()
        self.weight = Tensor(_glorot(rng, (n_out, n_in), n_in, n_out))
        self.bias = Tensor(np.zeros(n_out))
        self.params = (self.weight, self.bias)

    def out_shape(self, shape):
        return (self.weight.shape[0],)

    def forward(self, x, cache=True):
        flat = x.reshape(x.shape[0], -1)
        if cache:
            self._cache = (flat, x.shape)
        return flat @ self.weight.data.T + self.bias.data

    def backward(self, dout, need_input_grad=True):
        flat, shape = self._cached()
        self.weight.grad += dout.T @ flat
        self.bias.grad += dout.sum(axis=0)
        if not need_input_grad:
            return None
        return (dout @ self.weight.data).reshape(shape)


class Activation(Layer):
    def __init__(self, fn):
        super().__init__()
        if fn not in ("tanh", "relu"):
            raise ValueError(f"unknown activation {fn!r}")
        self.fn = fn

    def out_shape(self, shape):
        return shape

    def forward(self, x, cache=True):
        y = np.tanh(x) if self.fn == "tanh" else np.maximum(x, 0.0)
        if cache:
            self._cache = y if self.fn == "tanh" else x > 0
        return y

    def backward(self, dout, need_input_grad=True):
        c = self._cached()
        return dout * (1.0 - c * c) if self.fn == "tanh" else dout * c


class SoftmaxNLL(Layer):
    """Softmax output; pairs with :meth:`Network.nll` for the fused loss gradient."""

    def out_shape(self, shape):
        return shape

    def forward(self, x, cache=True):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=1, keepdims=True)
        if cache:
            self._cache = p
        return p

    def backward(self, dout, need_input_grad=True):
        p = self._cached()
        return p * (dout - (dout * p).sum(axis=1, keepdims=True))


def _build_layer(spec, shape, rng):
    a = spec.args
    if spec.kind == "conv":
        if shape[0] != a["in"]:
            raise ValueError(f"conv expects {a['in']} channels, gets {shape[0]}")
        return Conv2D(a["in"], a["out"], a["k"], rng)
    if spec.kind == "maxpool":
        return MaxPool2D(a["size"])
    if spec.kind == "dense":
        n_in = int(np.prod(shape))
        if n_in != a["in"]:
            raise ValueError(f"dense expects {a['in']} inputs, gets {n_in}")
        return Dense(a["in"], a["out"], rng)
    if spec.kind == "activation":
        return Activation(a["fn"])
    if spec.kind == "softmax_nll":
        return SoftmaxNLL()
    raise ValueError(f"unknown layer kind {spec.kind!r}")


class Network:
    """Ordered layer stack built from :class:`LayerSpec` values."""

    def __init__(self, input_shape, specs, rng_seed=0):
        self.input_shape = tuple(input_shape)
        self.specs = list(specs)
        self.rng_seed = int(rng_seed)
        rng = np.random.default_rng(self.rng_seed)
        self.layers = []
        shape = self.input_shape
        for spec in self.specs:
            layer = _build_layer(spec, shape, rng)
            shape = layer.out_shape(shape)
            self.layers.append(layer)
        self.output_shape = shape
        self.velocity = None
        self._labels = None
        self._forwarded = False

    # -- introspection
    def params(self):
        return [p for layer in self.layers for p in layer.params]

    def n_params(self):
        return sum(p.data.size for p in self.params())

    @property
    def has_softmax(self):
        return bool(self.layers) and isinstance(self.layers[-1], SoftmaxNLL)

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == len(self.input_shape):
            x = x[None]
        if tuple(x.shape[1:]) != self.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} does not match network input {self.input_shape}")
        return x

    # -- passes
    def forward(self, x, cache=True):
        """Forward pass on a ``(b, c, h, w)`` batch (a single ``(c, h, w)`` is promoted)."""
        x = self._check_input(x)
        if x.ndim == 4:
            x = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
        for layer in self.layers:
            x = layer.forward(x, cache)
        if cache:
            self._forwarded = True
        return x.transpose(0, 3, 1, 2) if x.ndim == 4 else x

    def __call__(self, x):
        return self.forward(x, cache=False)

    def forward_layers(self, x, start, stop):
        """Run layers ``start:stop`` without caching on channels-last input
        (used for shared-convolution inference)."""
        for layer in self.layers[start:stop]:
            x = layer.forward(x, cache=False)
        return x

    def nll(self, probs, labels):
        """Mean negative log-likelihood; remembers labels for a fused backward."""
        labels = np.asarray(labels, dtype=np.int64)
        self._labels = labels
        p = probs[np.arange(len(labels)), labels]
        return float(-np.mean(np.log(np.maximum(p, 1e-300))))

    def backward(self, loss_grad=None, need_input_grad=True):
        """Accumulate parameter gradients; return the gradient w.r.t. the input.

        With ``loss_grad=None`` the network must end in ``softmax_nll`` and
        :meth:`nll` must have been called: the fused softmax/NLL gradient is used.
        """
        if not self._forwarded:
            raise RuntimeError("backward called before forward")
        layers = self.layers
        if loss_grad is None:
            if not self.has_softmax or self._labels is None:
                raise RuntimeError("fused backward needs a softmax_nll head and a prior nll() call")
            p = layers[-1]._cached()
            g = p.copy()
            g[np.arange(len(self._labels)), self._labels] -= 1.0
            g /= len(self._labels)
            layers = layers[:-1]
        else:
            g = np.asarray(loss_grad, dtype=np.float64)
            if g.ndim == 4:
                g = np.ascontiguousarray(g.transpose(0, 2, 3, 1))
        for i in range(len(layers) - 1, -1, -1):
            need = need_input_grad or i > 0
            g = layers[i].backward(g, need)
        if g is not None and g.ndim == 4:
            g = g.transpose(0, 3, 1, 2)
        return g

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()


def grad_norm(net):
    return float(np.sqrt(sum(float((p.grad * p.grad).sum()) for p in net.params())))


def sgd_step(net, lr=0.01, momentum=0.9, clip_norm=None):
    """Momentum SGD: v <- momentum*v + g; p <- p - lr*v; gradients are zeroed.

    With ``clip_norm`` the gradient is first rescaled so that its global norm
    over the network does not exceed that value.
    """
    params = net.params()
    if net.velocity is None:
        net.velocity = [np.zeros_like(p.data) for p in params]
    scale = 1.0
    if clip_norm:
        norm = grad_norm(net)
        if norm > clip_norm:
            scale = clip_norm / norm
    for p, v in zip(params, net.velocity):
        v *= momentum
        v += p.grad if scale == 1.0 else scale * p.grad
        p.data -= lr * v
        p.zero_grad()


# ----------------------------------------------------------------- builders

def _backbone(in_size, activation):
    specs = [
        LayerSpec("conv", {"in": 1, "out": 20, "k": 5}),
        LayerSpec("activation", {"fn": activation}),
        LayerSpec("maxpool", {"size": 2}),
        LayerSpec("conv", {"in": 20, "out": 50, "k": 5}),
        LayerSpec("activation", {"fn": activation}),
        LayerSpec("maxpool", {"size": 2}),
    ]
    side = ((in_size - 4) // 2 - 4) // 2
    flat = 50 * side * side
    specs += [LayerSpec("dense", {"in": flat, "out": 1024}),
              LayerSpec("activation", {"fn": activation})]
    return specs


def build_normalizer(bank_size=10, activation="tanh", seed=0, input_size=48):
    """20@5x5 conv, pool 2, 50@5x5 conv, pool 2, 1024 dense, linear ``bank_size`` output."""
    if bank_size < 1:
        raise ValueError("bank_size must be >= 1")
    specs = _backbone(input_size, activation) + [LayerSpec("dense", {"in": 1024, "out": bank_size})]
    return Network((1, input_size, input_size), specs, seed)


def build_detector(num_classes=2, activation="tanh", seed=0, input_size=32):
    """Normalizer backbone on 32x32 inputs with a softmax classification head."""
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    specs = _backbone(input_size, activation) + [
        LayerSpec("dense", {"in": 1024, "out": num_classes}),
        LayerSpec("softmax_nll"),
    ]
    return Network((1, input_size, input_size), specs, seed)


def build_mlp(input_shape, hidden, n_out, activation="tanh", softmax=False, seed=0):
    """Two-layer dense network; small enough for exhaustive gradient checks."""
    n_in = int(np.prod(input_shape))
    specs = [LayerSpec("dense", {"in": n_in, "out": hidden}),
             LayerSpec("activation", {"fn": activation}),
             LayerSpec("dense", {"in": hidden, "out": n_out})]
    if softmax:
        specs.append(LayerSpec("softmax_nll"))
    return Network(tuple(input_shape), specs, seed)


# ------------------------------------------------------------- persistence

def model_bytes(net):
    header = [MAGIC.decode(), "input " + " ".join(str(s) for s in net.input_shape),
              f"seed {net.rng_seed}", f"layers {len(net.specs)}"]
    header += [s.to_text() for s in net.specs]
    header += [f"params {net.n_params()}", "end"]
    payload = b"".join(p.data.astype("<f8").tobytes() for p in net.params())
    return ("\n".join(header) + "\n").encode() + payload


def save_model(net, path):
    with open(path, "wb") as fh:
        fh.write(model_bytes(net))


def model_from_bytes(data):
    buf = io.BytesIO(data)
    if buf.readline().rstrip(b"\n") != MAGIC:
        raise ModelVersionError("not an ALCNMDL1 model file")
    try:
        input_shape = tuple(int(v) for v in buf.readline().split()[1:])
        seed = int(buf.readline().split()[1])
        n_layers = int(buf.readline().split()[1])
        specs = [LayerSpec.from_text(buf.readline().decode().strip()) for _ in range(n_layers)]
        n_params = int(buf.readline().split()[1])
        if buf.readline().strip() != b"end":
            raise ModelFormatError("malformed model header")
    except (ValueError, IndexError, KeyError) as exc:
        raise ModelFormatError(f"malformed model header: {exc}") from None
    net = Network(input_shape, specs, seed)
    if net.n_params() != n_params:
        raise ModelTruncatedError(f"header declares {n_params} parameters, layers need {net.n_params()}")
    payload = buf.read()
    if len(payload) != 8 * n_params:
        raise ModelTruncatedError(f"payload holds {len(payload) // 8} of {n_params} parameters")
    flat = np.frombuffer(payload, dtype="<f8")
    pos = 0
    for p in net.params():
        p.data[...] = flat[pos:pos + p.data.size].reshape(p.shape)
        pos += p.data.size
    return net


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
