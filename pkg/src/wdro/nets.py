"""Dense feed-forward nets with reverse-mode gradients in parameters and inputs.

Small enough to differentiate by hand: a stack of affine layers with a
smooth (or ReLU) activation between them, topped by either a softmax
cross-entropy head or a squared-error head.  Everything is plain numpy;
no computation graphs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ACT_ELU = "elu"
ACT_RELU = "relu"
ACT_SIGMOID = "sigmoid"
ACTIVATIONS = (ACT_ELU, ACT_RELU, ACT_SIGMOID)

HEAD_SOFTMAX = "softmax_xent"
HEAD_SQUARED = "squared_error"
HEADS = (HEAD_SOFTMAX, HEAD_SQUARED)

CHECKPOINT_FORMAT = "wdro-net-v1"


class DimensionMismatchError(ValueError):
    """Input/parameter shapes do not chain."""


class NonFiniteError(FloatingPointError):
    """A forward or backward pass produced inf/nan."""


@dataclass
class Sample:
    """One data point: feature vector x plus label y.

    y is a class index for classification heads and a scalar or vector
    target for regression heads.
    """

    x: np.ndarray
    y: object

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 1:
            raise DimensionMismatchError(f"x must be 1-D, got shape {self.x.shape}")
        if not np.all(np.isfinite(self.x)):
            raise NonFiniteError("sample features must be finite")

    def with_x(self, x: np.ndarray) -> "Sample":
        return Sample(np.asarray(x, dtype=np.float64).copy(), self.y)


def _act(kind, p):
    if kind == ACT_ELU:
        return np.where(p > 0, p, np.expm1(np.minimum(p, 0.0)))
    if kind == ACT_RELU:
        return np.maximum(p, 0.0)
    if kind == ACT_SIGMOID:
        out = np.empty_like(p)
        pos = p >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-p[pos]))
        ep = np.exp(p[~pos])
        out[~pos] = ep / (1.0 + ep)
        return out
    raise ValueError(f"unknown activation {kind!r}")


def _act_deriv(kind, p, a):
    # ReLU at a pre-activation of exactly 0 takes the zero-slope branch;
    # this makes grad_input deterministic on the boundary.
    if kind == ACT_ELU:
        return np.where(p > 0, 1.0, np.exp(np.minimum(p, 0.0)))
    if kind == ACT_RELU:
        return (p > 0).astype(np.float64)
    if kind == ACT_SIGMOID:
        return a * (1.0 - a)
    raise ValueError(f"unknown activation {kind!r}")


class SmoothNet:
    """Feed-forward net: affine layers, per-hidden-layer activation, loss head.

    layers: list of (W, b) with W shape (out, in), b shape (out,).
    activations: one activation name per hidden layer (len(layers) - 1 of
    them; the last affine layer feeds the head directly).
    head: HEAD_SOFTMAX (y is a class index) or HEAD_SQUARED (y is a scalar
    or a vector matching the output dimension; loss is 0.5 * ||u - y||^2).
    """

    def __init__(self, layers, activations, head):
        self.layers = [
            (np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64))
            for w, b in layers
        ]
        if isinstance(activations, str):
            activations = [activations] * (len(self.layers) - 1)
        self.activations = list(activations)
        self.head = head

        if head not in HEADS:
            raise ValueError(f"unknown head {head!r}")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if len(self.activations) != len(self.layers) - 1:
            raise DimensionMismatchError(
                f"{len(self.layers)} layers need {len(self.layers) - 1} "
                f"activations, got {len(self.activations)}"
            )
        for i, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise DimensionMismatchError(f"layer {i}: W {w.shape} vs b {b.shape}")
            if i > 0 and w.shape[1] != self.layers[i - 1][0].shape[0]:
                raise DimensionMismatchError(
                    f"layer {i} expects {w.shape[1]} inputs, layer {i-1} "
                    f"emits {self.layers[i-1][0].shape[0]}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NonFiniteError(f"layer {i} has non-finite parameters")

    # -- construction helpers -------------------------------------------------

    @classmethod
    def random(cls, dims, activation, head, seed):
        """Uniform init scaled by 1/sqrt(fan-in), PCG64 stream keyed by seed."""
        rng = np.random.default_rng(seed)
        layers = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            s = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-s, s, size=(fan_out, fan_in))
            b = rng.uniform(-s, s, size=fan_out)
            layers.append((w, b))
        return cls(layers, activation, head)

    def copy(self) -> "SmoothNet":
        return SmoothNet(
            [(w.copy(), b.copy()) for w, b in self.layers],
            list(self.activations),
            self.head,
        )

    # -- shape queries ---------------------------------------------------------

    @property
    def input_dim(self):
        return self.layers[0][0].shape[1]

    @property
    def output_dim(self):
        return self.layers[-1][0].shape[0]

    @property
    def dims(self):
        return [self.input_dim] + [w.shape[0] for w, _ in self.layers]

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in self.layers)

    # -- flat parameter vector (layer-major, W row-major, then b) --------------

    def get_flat(self):
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in self.layers])

    def set_flat(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise DimensionMismatchError(
                f"expected {self.n_params} parameters, got {theta.shape}"
            )
        if not np.all(np.isfinite(theta)):
            raise NonFiniteError("non-finite parameter vector")
        k = 0
        new_layers = []
        for w, b in self.layers:
            nw, nb = w.size, b.size
            new_layers.append(
                (theta[k : k + nw].reshape(w.shape).copy(), theta[k + nw : k + nw + nb].copy())
            )
            k += nw + nb
        self.layers = new_layers

    # -- forward / backward -----------------------------------------------------

    def _check_sample(self, z: Sample):
        if z.x.shape != (self.input_dim,):
            raise DimensionMismatchError(
                f"input dim {z.x.shape[0]} != model dim {self.input_dim}"
            )
        if self.head == HEAD_SOFTMAX:
            y = z.y
            if not (isinstance(y, (int, np.integer)) and 0 <= int(y) < self.output_dim):
                raise DimensionMismatchError(
                    f"label {y!r} not a class index in [0, {self.output_dim})"
                )

    def _forward(self, x):
        """Returns (pre-activations, post-activations) per layer; last entry
        of posts is the head input."""
        pres, posts = [], []
        a = x
        # overflow surfaces as NonFiniteError from the finiteness checks,
        # not as a numpy warning
        with np.errstate(over="ignore", invalid="ignore"):
            for i, (w, b) in enumerate(self.layers):
                p = w @ a + b
                pres.append(p)
                a = _act(self.activations[i], p) if i < len(self.layers) - 1 else p
                posts.append(a)
        return pres, posts

    def _head_loss_and_grad(self, u, y):
        """Loss and dloss/du for head input u."""
        if self.head == HEAD_SOFTMAX:
            m = np.max(u)
            lse = m + np.log(np.sum(np.exp(u - m)))
            loss = lse - u[int(y)]
            g = np.exp(u - lse)
            g[int(y)] -= 1.0
            return loss, g
        target = np.asarray(y, dtype=np.float64).reshape(-1)
        if target.shape != u.shape:
            raise DimensionMismatchError(
                f"regression target shape {target.shape} != output {u.shape}"
            )
        r = u - target
        return 0.5 * float(r @ r), r

    def _backprop(self, x, y, need_theta, need_input):
        pres, posts = self._forward(x)
        u = posts[-1]
        loss, delta = self._head_loss_and_grad(u, y)
        if not np.isfinite(loss):
            raise NonFiniteError("non-finite loss in forward pass")

        grad_theta = np.empty(self.n_params) if need_theta else None
        # walk layers backwards; delta is dL/d(pre-activation of layer i)
        offsets = []
        if need_theta:
            k = 0
            for w, b in self.layers:
                offsets.append(k)
                k += w.size + b.size
        for i in range(len(self.layers) - 1, -1, -1):
            w, b = self.layers[i]
            a_prev = posts[i - 1] if i > 0 else x
            if need_theta:
                k = offsets[i]
                grad_theta[k : k + w.size] = np.outer(delta, a_prev).ravel()
                grad_theta[k + w.size : k + w.size + b.size] = delta
            delta = w.T @ delta
            if i > 0:
                delta = delta * _act_deriv(self.activations[i - 1], pres[i - 1], posts[i - 1])

        grad_x = delta if need_input else None
        if need_theta and not np.all(np.isfinite(grad_theta)):
            raise NonFiniteError("non-finite parameter gradient")
        if need_input and not np.all(np.isfinite(grad_x)):
            raise NonFiniteError("non-finite input gradient")
        return loss, grad_theta, grad_x

    def loss(self, z: Sample) -> float:
        self._check_sample(z)
        _, posts = self._forward(z.x)
        value, _ = self._head_loss_and_grad(posts[-1], z.y)
        if not np.isfinite(value):
            raise NonFiniteError("non-finite loss in forward pass")
        return float(value)

    def grad_theta(self, z: Sample) -> np.ndarray:
        self._check_sample(z)
        _, g, _ = self._backprop(z.x, z.y, need_theta=True, need_input=False)
        return g

    def grad_input(self, z: Sample) -> np.ndarray:
        self._check_sample(z)
        _, _, g = self._backprop(z.x, z.y, need_theta=False, need_input=True)
        return g

    def loss_and_grad_input(self, z: Sample):
        self._check_sample(z)
        value, _, g = self._backprop(z.x, z.y, need_theta=False, need_input=True)
        return float(value), g

    def predict_class(self, x) -> int:
        _, posts = self._forward(np.asarray(x, dtype=np.float64))
        return int(np.argmax(posts[-1]))

    # -- checkpoint schema (wdro-net-v1) ----------------------------------------
    # JSON object, canonical separators, sorted keys:
    #   format: "wdro-net-v1"
    #   dims, activations, head
    #   layers: [{"w": [[row-major floats]], "b": [floats]}]
    # Floats serialize via Python repr (shortest round-trip), so saving the
    # same model always yields identical bytes.

    def to_json(self) -> str:
        doc = {
            "format": CHECKPOINT_FORMAT,
            "dims": self.dims,
            "activations": self.activations,
            "head": self.head,
            "layers": [{"w": w.tolist(), "b": b.tolist()} for w, b in self.layers],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "SmoothNet":
        doc = json.loads(text)
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {doc.get('format')!r}")
        layers = [(np.array(l["w"]), np.array(l["b"])) for l in doc["layers"]]
        return cls(layers, doc["activations"], doc["head"])

    @classmethod
    def load(cls, path) -> "SmoothNet":
        with open(path) as fh:
            return cls.from_json(fh.read())


@dataclass
class SmoothnessEstimate:
    """Curvature probe of the loss in the input.

    L_zz is the largest per-sample curvature magnitude of the input Hessian,
    estimated by power iteration on finite-difference Hessian-vector
    products.  When a penalty gamma is supplied, per-sample flags record
    gamma - L_zz(z_i) > 0 and fraction_concave is their mean.  ReLU models
    get reliable=False: the loss is piecewise linear, so the probe sees
    curvature 0 or garbage at kinks.
    """

    L_zz: float
    per_sample: list = field(default_factory=list)
    flags: list | None = None
    fraction_concave: float | None = None
    reliable: bool = True


def _hessian_vec(model: SmoothNet, z: Sample, v, h):
    gp = model.grad_input(z.with_x(z.x + h * v))
    gm = model.grad_input(z.with_x(z.x - h * v))
    return (gp - gm) / (2.0 * h)


def estimate_Lzz(model: SmoothNet, samples, probes=1, gamma=None, power_steps=20, seed=0):
    """Estimate the Lipschitz constant of grad_input over the given samples.

    Power iteration (power_steps rounds, `probes` random restarts per
    sample) on Hessian-vector products approximated by central differences
    of grad_input with step 1e-4 * (1 + ||x||).
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    rng = np.random.default_rng(seed)
    per_sample = []
    for z in samples:
        h = 1e-4 * (1.0 + float(np.linalg.norm(z.x)))
        best = 0.0
        for _ in range(probes):
            v = rng.standard_normal(z.x.shape[0])
            v /= np.linalg.norm(v)
            lam = 0.0
            for _ in range(power_steps):
                hv = _hessian_vec(model, z, v, h)
                nrm = np.linalg.norm(hv)
                if nrm < 1e-14:
                    lam = 0.0
                    break
                lam = float(v @ hv)
                v = hv / nrm
            best = max(best, abs(lam))
        per_sample.append(best)

    flags = None
    fraction = None
    if gamma is not None:
        flags = [gamma - est > 0 for est in per_sample]
        fraction = float(np.mean(flags)) if flags else 0.0
    reliable = ACT_RELU not in model.activations
    L = max(per_sample) if per_sample else 0.0
    return SmoothnessEstimate(
        L_zz=L,
        per_sample=per_sample,
        flags=flags,
        fraction_concave=fraction,
        reliable=reliable,
    )
