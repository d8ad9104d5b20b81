"""Feedforward networks: training, tanh emulators of Legendre polynomials,
the structured emulator family, and interpolating zero-loss minimizers.

Networks are ``N(z) = A_{L+1}(s(A_L(... s(A_0 z))))`` with affine maps ``A_l``
and a componentwise activation ``s``.  Parameters live in one flat vector;
the per-layer weight and bias arrays are views into it.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .legendre import DiscreteNorm, low_discrepancy_points, legendre_roots, sign_corners, eval_psi
from .multiindex import IndexSet, MultiIndex, WeightSystem, weighted_cardinality

ACTIVATIONS = ("tanh", "relu", "elu")


class CalibrationError(RuntimeError):
    """Requested emulation accuracy is not reachable in double precision."""


class NonFiniteLossError(FloatingPointError):
    """Training produced a non-finite loss."""


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))


def _act_deriv(name, z, a):
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0).astype(float)
    return np.where(z > 0, 1.0, a + 1.0)


class MLP:
    """Fully connected network with explicit parameter storage.

    Parameters
    ----------
    layer_dims : sequence of int
        ``(n_0, n_1, ..., n_L, n_out)``; ``L = len(layer_dims) - 2`` hidden layers.
    activation : {"tanh", "relu", "elu"}
    theta : array_like, optional
        Flat parameter vector (all zeros when omitted).
    """

    def __init__(self, layer_dims, activation: str = "tanh", theta=None, share: bool = False):
        dims = tuple(int(n) for n in layer_dims)
        if len(dims) < 2 or min(dims) < 1:
            raise ValueError("need at least input and output dims, all >= 1")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.layer_dims = dims
        self.activation = activation
        sizes = [dims[l + 1] * dims[l] + dims[l + 1] for l in range(len(dims) - 1)]
        if theta is None:
            self.theta = np.zeros(sum(sizes))
        else:
            self.theta = np.asarray(theta, dtype=float) if share else np.array(theta, dtype=float)
        if self.theta.shape != (sum(sizes),):
            raise ValueError("parameter vector has the wrong length")
        self._bind()

    def _bind(self):
        self.W, self.b = [], []
        off = 0
        dims = self.layer_dims
        for l in range(len(dims) - 1):
            n_in, n_out = dims[l], dims[l + 1]
            self.W.append(self.theta[off:off + n_out * n_in].reshape(n_out, n_in))
            off += n_out * n_in
            self.b.append(self.theta[off:off + n_out])
            off += n_out

    @classmethod
    def from_layers(cls, Ws, bs, activation: str = "tanh") -> "MLP":
        dims = [Ws[0].shape[1]] + [W.shape[0] for W in Ws]
        net = cls(dims, activation)
        for l, (W, b) in enumerate(zip(Ws, bs)):
            net.W[l][...] = W
            net.b[l][...] = b
        return net

    def copy(self) -> "MLP":
        return MLP(self.layer_dims, self.activation, self.theta.copy())

    @property
    def depth(self) -> int:
        return len(self.layer_dims) - 2

    @property
    def width(self) -> int:
        inner = self.layer_dims[1:-1]
        return max(inner) if inner else 0

    @property
    def n_params(self) -> int:
        return self.theta.shape[0]

    def __call__(self, X) -> np.ndarray:
        return forward(self, X)

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write("mlp " + self.activation + " " + " ".join(str(n) for n in self.layer_dims) + "\n")
        for l, (W, b) in enumerate(zip(self.W, self.b)):
            buf.write(f"W {l} {W.shape[0]} {W.shape[1]}\n")
            for row in W:
                buf.write(" ".join(f"{v:.17g}" for v in row) + "\n")
            buf.write(f"b {l} {b.shape[0]}\n")
            buf.write(" ".join(f"{v:.17g}" for v in b) + "\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "MLP":
        lines = text.splitlines()
        head = lines[0].split()
        if head[0] != "mlp":
            raise ValueError("not a network file")
        net = cls([int(v) for v in head[2:]], head[1])
        pos = 1
        for l in range(len(net.W)):
            _, _, rows, cols = lines[pos].split()
            pos += 1
            for i in range(int(rows)):
                net.W[l][i] = [float(v) for v in lines[pos].split()]
                pos += 1
            pos += 1
            net.b[l][:] = [float(v) for v in lines[pos].split()]
            pos += 1
        return net


def forward(net: MLP, X) -> np.ndarray:
    """Network output for one input ``(n_0,)`` or a batch ``(n, n_0)``."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    H = np.atleast_2d(X)
    if H.shape[1] != net.layer_dims[0]:
        raise ValueError(f"input has {H.shape[1]} features, network expects {net.layer_dims[0]}")
    last = len(net.W) - 1
    for l, (W, b) in enumerate(zip(net.W, net.b)):
        H = H @ W.T + b
        if l < last:
            H = _act(net.activation, H)
    return H[0] if single else H


def init_he_uniform(net: MLP, seed: int) -> MLP:
    """He-uniform initialisation of weights and biases, ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``."""
    rng = np.random.default_rng(seed)
    for W, b in zip(net.W, net.b):
        lim = math.sqrt(6.0 / W.shape[1])
        W[...] = rng.uniform(-lim, lim, W.shape)
        b[...] = rng.uniform(-lim, lim, b.shape)
    return net


def _loss_residual_grad(R, norm: DiscreteNorm | None):
    """Loss ``mean ||R_i||**2`` and its derivative with respect to the outputs."""
    m = R.shape[0]
    if norm is None or norm.kind == "weighted-euclidean":
        w = np.ones(R.shape[1]) if norm is None else norm.weights
        loss = float(np.sum(w * R * R)) / m
        return loss, 2.0 * w * R / m
    if norm.kind == "weighted-l4":
        s = np.sum(norm.weights * R**4, axis=1)
        root = np.sqrt(s)
        loss = float(np.sum(root)) / m
        safe = np.where(root > 0, root, 1.0)[:, None]
        dR = np.where(safe > 0, 2.0 * norm.weights * R**3 / safe, 0.0) / m
        return loss, dR
    raise NotImplementedError("training loss needs a euclidean or l4 norm")


def loss_and_grad(net: MLP, X, Y, norm: DiscreteNorm | None = None, need_grad: bool = True):
    """Empirical loss ``1/m sum ||Y_i - N(X_i)||_Y**2`` and its exact gradient.

    The gradient is assembled by reverse-mode accumulation into a flat vector
    aligned with ``net.theta``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    acts = [X]
    pre = []
    H = X
    last = len(net.W) - 1
    for l, (W, b) in enumerate(zip(net.W, net.b)):
        Z = H @ W.T + b
        if l < last:
            pre.append(Z)
            H = _act(net.activation, Z)
            acts.append(H)
        else:
            H = Z
    R = H - Y
    loss, dOut = _loss_residual_grad(R, norm)
    if not need_grad:
        return loss, None
    grad = np.empty_like(net.theta)
    views = MLP(net.layer_dims, net.activation, grad, share=True)
    delta = dOut
    for l in range(last, -1, -1):
        views.W[l][...] = delta.T @ acts[l]
        views.b[l][...] = delta.sum(axis=0)
        if l > 0:
            back = delta @ net.W[l]
            delta = back * _act_deriv(net.activation, pre[l - 1], acts[l])
    return loss, grad


def finite_difference_grad(net: MLP, X, Y, norm=None, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of the loss, one parameter at a time."""
    g = np.empty_like(net.theta)
    probe = net.copy()
    for i in range(net.theta.shape[0]):
        orig = probe.theta[i]
        probe.theta[i] = orig + step
        lp, _ = loss_and_grad(probe, X, Y, norm, need_grad=False)
        probe.theta[i] = orig - step
        lm, _ = loss_and_grad(probe, X, Y, norm, need_grad=False)
        probe.theta[i] = orig
        g[i] = (lp - lm) / (2 * step)
    return g


@dataclass
class TrainConfig:
    epochs: int = 60000
    lr_init: float = 1e-3
    lr_final: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    tol: float = 5e-7
    checkpoint_ratio: float = 1.0 / 8.0
    seed: int = 0


@dataclass
class TrainTrace:
    losses: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    final_loss: float = math.nan
    checkpoint_loss: float = math.nan
    restored: bool = False
    epochs_run: int = 0


def train(net: MLP, data, enc_dec=None, norm: DiscreteNorm | None = None, cfg: TrainConfig = TrainConfig(),
          record_every: int = 100):
    """Full-batch Adam with exponential learning-rate decay and checkpointing.

    A checkpoint is saved whenever the loss drops below ``checkpoint_ratio``
    times the last checkpoint loss or reaches a new best.  Training stops at
    ``cfg.epochs`` or once the loss is below ``cfg.tol``; the checkpoint is
    restored at the end if it beats the final loss.
    """
    X = data.X if enc_dec is None else enc_dec.encode_x(data.X)
    Y = data.Y if enc_dec is None else enc_dec.encode_y(data.Y)
    if X.shape[1] != net.layer_dims[0] or Y.shape[1] != net.layer_dims[-1]:
        raise ValueError("network dims do not match the data")
    m1 = np.zeros_like(net.theta)
    m2 = np.zeros_like(net.theta)
    trace = TrainTrace()
    ckpt_theta = net.theta.copy()
    ckpt_loss = math.inf
    best = math.inf
    decay = (cfg.lr_final / cfg.lr_init) ** (1.0 / max(cfg.epochs - 1, 1))
    loss = math.inf
    for epoch in range(cfg.epochs):
        loss, grad = loss_and_grad(net, X, Y, norm)
        if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise NonFiniteLossError(f"non-finite loss at epoch {epoch}: {loss}")
        if loss < best or loss < cfg.checkpoint_ratio * ckpt_loss:
            ckpt_theta[:] = net.theta
            ckpt_loss = loss
            trace.checkpoints.append(epoch)
        best = min(best, loss)
        if epoch % record_every == 0:
            trace.losses.append((epoch, loss))
        trace.epochs_run = epoch + 1
        if loss < cfg.tol:
            break
        lr = cfg.lr_init * decay**epoch
        _kernels.adam_step(net.theta, grad, m1, m2, lr, cfg.beta1, cfg.beta2, cfg.eps, float(epoch + 1))
    else:
        loss, _ = loss_and_grad(net, X, Y, norm, need_grad=False)
        if not math.isfinite(loss):
            raise NonFiniteLossError("non-finite loss after the last update")
    trace.final_loss = loss
    if ckpt_loss < loss:
        net.theta[:] = ckpt_theta
        trace.restored = True
        trace.final_loss = ckpt_loss
    trace.checkpoint_loss = ckpt_loss
    return net, trace


# ---------------------------------------------------------------------------
# emulators

B_OFFSET = 0.5
DELTA_FLOOR = 1e-10


def _tanh_d2(b):
    t = math.tanh(b)
    return -2.0 * t * (1.0 - t * t)


@dataclass(frozen=True)
class SquareUnit:
    """``x**2 ~ c (tanh(b + h x) + tanh(b - h x) - 2 tanh(b))`` with ``c = 1/(h**2 tanh''(b))``."""

    h: float
    b: float = B_OFFSET
    error: float = 0.0
    M: float = 1.0

    @property
    def c(self) -> float:
        return 1.0 / (self.h * self.h * _tanh_d2(self.b))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        tb = math.tanh(self.b)
        return self.c * ((np.tanh(self.b + self.h * x) + np.tanh(self.b - self.h * x)) - 2.0 * tb)


@dataclass(frozen=True)
class IdentityUnit:
    """``x ~ tanh(h x) / h``."""

    h: float
    error: float = 0.0
    M: float = 1.0

    def __call__(self, x):
        return np.tanh(self.h * np.asarray(x, dtype=float)) / self.h


def _calibrate(make, target, delta, M, h_max):
    """Largest step ``h <= h_max`` whose sup error on a 4096-point grid is <= delta."""
    grid = np.linspace(-M, M, 4096)
    exact = target(grid)

    def err(h):
        return float(np.max(np.abs(make(h)(grid) - exact)))

    if delta <= 0:
        raise ValueError("delta must be positive")
    hs = h_max * np.logspace(0, -9, 91)
    errs = np.array([err(h) for h in hs])
    ok = np.nonzero(errs <= delta)[0]
    if ok.size == 0:
        raise CalibrationError(f"cannot reach delta={delta:.3e} on [-{M}, {M}]; best error {errs.min():.3e}")
    i = ok[0]
    if i == 0:
        return hs[0], errs[0]
    lo, hi = math.log(hs[i]), math.log(hs[i - 1])  # err(lo) ok, err(hi) too big
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if err(math.exp(mid)) <= delta:
            lo = mid
        else:
            hi = mid
    h = math.exp(lo)
    return h, err(h)


def build_square_emulator(delta: float, range_bound: float = 1.0) -> SquareUnit:
    """Calibrate the tanh square unit to sup error ``delta`` on ``[-M, M]``."""
    h, e = _calibrate(lambda h: SquareUnit(h), np.square, delta, range_bound, 1.0 / range_bound)
    return SquareUnit(h, B_OFFSET, e, range_bound)


def build_identity_emulator(delta: float, range_bound: float = 1.0) -> IdentityUnit:
    h, e = _calibrate(lambda h: IdentityUnit(h), lambda x: x, delta, range_bound, 1.0 / range_bound)
    return IdentityUnit(h, e, range_bound)


def square_network(sq: SquareUnit) -> MLP:
    """The square unit as a 1-2-1 tanh network."""
    W0 = np.array([[sq.h], [-sq.h]])
    b0 = np.array([sq.b, sq.b])
    W1 = np.array([[sq.c, sq.c]])
    b1 = np.array([-2.0 * math.tanh(sq.b) * sq.c])
    return MLP.from_layers([W0, W1], [b0, b1])


def _stage(n_in, sq: SquareUnit, ident: IdentityUnit):
    """One tree level: hidden pre-activation map and linear read-out.

    Returns ``(Win, bin, Wout, bout)`` acting on ``n_in`` values and producing
    ``ceil(n_in / 2)`` values (pairwise products plus an odd leftover).
    """
    pairs = n_in // 2
    odd = n_in % 2
    n_hid = 4 * pairs + odd
    n_out = pairs + odd
    Win = np.zeros((n_hid, n_in))
    bin_ = np.zeros(n_hid)
    Wout = np.zeros((n_out, n_hid))
    bout = np.zeros(n_out)
    h, b, c = sq.h, sq.b, sq.c
    for p in range(pairs):
        a, bb = 2 * p, 2 * p + 1
        r = 4 * p
        # tanh(b +- h (x + y)) and tanh(b +- h (x - y))
        Win[r, [a, bb]] = [h, h]
        Win[r + 1, [a, bb]] = [-h, -h]
        Win[r + 2, [a, bb]] = [h, -h]
        Win[r + 3, [a, bb]] = [-h, h]
        bin_[r:r + 4] = b
        # xy = (sq(x + y) - sq(x - y)) / 4; the -2 tanh(b) offsets cancel
        Wout[p, r:r + 4] = [c / 4, c / 4, -c / 4, -c / 4]
    if odd:
        Win[n_hid - 1, n_in - 1] = ident.h
        Wout[n_out - 1, n_hid - 1] = 1.0 / ident.h
    return Win, bin_, Wout, bout


def _chain(stages, in_map=None, out_scale=1.0):
    """Compose stages into an MLP; ``in_map = (A, a)`` is an affine input map."""
    Ws, bs = [], []
    prevW, prevb = in_map if in_map is not None else (None, None)
    for Win, bin_, Wout, bout in stages:
        if prevW is None:
            Ws.append(Win)
            bs.append(bin_)
        else:
            Ws.append(Win @ prevW)
            bs.append(Win @ prevb + bin_)
        prevW, prevb = Wout, bout
    Ws.append(out_scale * prevW)
    bs.append(out_scale * prevb)
    return MLP.from_layers(Ws, bs)


@dataclass
class ProductTree:
    n_factors: int
    square: SquareUnit
    identity: IdentityUnit
    levels: int

    def stages(self):
        out = []
        n = self.n_factors
        if n == 1:
            return [_stage(1, self.square, self.identity)]
        while n > 1:
            out.append(_stage(n, self.square, self.identity))
            n = (n + 1) // 2
        return out

    def network(self, in_map=None, out_scale=1.0) -> MLP:
        return _chain(self.stages(), in_map, out_scale)


def _levels(n: int) -> int:
    return max(1, math.ceil(math.log2(n))) if n > 1 else 1


def build_product_tree(n_factors: int, delta: float, per_factor_range: float = 1.0) -> ProductTree:
    """Tree of pairwise tanh products of ``n_factors`` inputs in ``[-1, 1]``.

    Each level gets the error budget ``delta / (2 * levels)``; squares are
    calibrated on ``[-2, 2]`` (sums of two factors) with a small margin.
    """
    if n_factors < 1:
        raise ValueError("need at least one factor")
    levels = _levels(n_factors)
    stage_delta = max(delta / (2.0 * levels), DELTA_FLOOR)
    margin = 1.0 + 1e-3
    sq = build_square_emulator(2.0 * stage_delta, 2.0 * per_factor_range * margin)
    ident = build_identity_emulator(stage_delta, per_factor_range * margin)
    return ProductTree(n_factors, sq, ident, levels)


@dataclass
class LegendreEmulator:
    nu: MultiIndex
    d: int
    net: MLP
    delta: float
    measured_error: float
    scale: float
    n_factors: int

    @property
    def width(self) -> int:
        return self.net.width

    @property
    def depth(self) -> int:
        return self.net.depth

    def __call__(self, X):
        return forward(self.net, X)[..., 0]


def _factor_map(nu: MultiIndex, d: int):
    """Affine map from ``x`` to the scaled root factors, and the output scale."""
    rows, offs = [], []
    scale = 1.0
    for dim, e in nu.entries:
        roots, lead = legendre_roots(e)
        scale *= math.sqrt(2 * e + 1) * lead
        for r in roots:
            s = 1.0 + abs(r)
            row = np.zeros(d)
            row[dim - 1] = 1.0 / s
            rows.append(row)
            offs.append(-r / s)
            scale *= s
    return np.array(rows), np.array(offs), scale


def _exact_Psi(nu: MultiIndex, X):
    out = np.ones(X.shape[0])
    for dim, e in nu.entries:
        out = out * eval_psi(e, X[:, dim - 1])
    return out


def certification_points(d: int, n: int = 100_000, seed: int = 0) -> np.ndarray:
    return np.vstack([low_discrepancy_points(d, n, seed), sign_corners(d)])


def measure_emulator_error(nu: MultiIndex, net: MLP, d: int, n: int = 100_000, seed: int = 0) -> float:
    X = certification_points(d, n, seed)
    return float(np.max(np.abs(forward(net, X)[:, 0] - _exact_Psi(nu, X))))


def constant_network(d: int, value: float = 1.0, depth: int = 1) -> MLP:
    """Exact constant: zero hidden weights, output bias ``value``."""
    net = MLP((d,) + (1,) * depth + (1,), "tanh")
    net.b[-1][0] = value
    return net


def pad_depth(net: MLP, depth: int, delta: float, range_bound: float) -> MLP:
    """Append near-identity tanh layers until the network has ``depth`` hidden layers."""
    extra = depth - net.depth
    if extra < 0:
        raise ValueError("network is already deeper than requested")
    if extra == 0:
        return net.copy()
    Ws = [W.copy() for W in net.W]
    bs = [b.copy() for b in net.b]
    n_out = Ws[-1].shape[0]
    if not np.any(Ws[-1]) and all(not np.any(W) for W in Ws):
        # constant network: zero layers keep it exact
        for _ in range(extra):
            Ws.insert(-1, np.zeros((1, Ws[-2].shape[0] if len(Ws) > 1 else Ws[-1].shape[1])))
            bs.insert(-1, np.zeros(1))
        Ws[-1] = np.zeros((n_out, 1))
        return MLP.from_layers(Ws, bs, net.activation)
    ident = build_identity_emulator(max(delta / extra, DELTA_FLOOR), range_bound)
    for _ in range(extra):
        Wl, bl = Ws.pop(), bs.pop()
        Ws.append(ident.h * Wl)
        bs.append(ident.h * bl)
        Ws.append(np.eye(n_out) / ident.h)
        bs.append(np.zeros(n_out))
    return MLP.from_layers(Ws, bs, net.activation)


def build_legendre_emulator(nu: MultiIndex, delta: float, d: int | None = None, depth: int | None = None,
                            n_cert: int = 100_000, seed: int = 0) -> LegendreEmulator:
    """tanh network approximating ``Psi_nu`` on ``[-1, 1]^d`` to sup error ``delta``.

    The first affine layer forms the scaled root factors ``(x_i - r)/(1 + |r|)``
    of the univariate Legendre polynomials; a product tree multiplies them and
    the final layer restores the scale.  The sup error is certified on
    ``n_cert`` scrambled Sobol points plus sign corners; the tree budget is
    tightened until the certificate holds.  ``depth`` pads the network with
    near-identity layers (budgeted inside ``delta``).
    """
    d = max(nu.max_dim, 1) if d is None else d
    if nu.max_dim > d:
        raise ValueError("index does not fit the input dimension")
    delta = max(delta, DELTA_FLOOR)
    if nu.is_zero():
        net = constant_network(d, 1.0, depth or 1)
        return LegendreEmulator(nu, d, net, delta, 0.0, 1.0, 0)
    A, a, scale = _factor_map(nu, d)
    n = A.shape[0]
    own_depth = _levels(n)
    target_depth = own_depth if depth is None else depth
    pad_share = 0.25 if target_depth > own_depth else 0.0
    budget = delta * (1.0 - pad_share) / scale
    u_nu = math.prod(math.sqrt(2 * e + 1) for _, e in nu.entries)
    for _ in range(12):
        tree = build_product_tree(n, budget)
        net = tree.network((A, a), scale)
        if target_depth > own_depth:
            net = pad_depth(net, target_depth, pad_share * delta, u_nu * 1.01 + delta)
        err = measure_emulator_error(nu, net, d, n_cert, seed)
        if err <= delta:
            return LegendreEmulator(nu, d, net, delta, err, scale, n)
        budget *= 0.25
        if budget < DELTA_FLOOR:
            break
    raise CalibrationError(f"emulator for {nu} did not certify below {delta:.3e} (last {err:.3e})")


def emulator_depth(nu: MultiIndex) -> int:
    return _levels(max(nu.order, 1))


@dataclass
class FamilyNetwork:
    net: MLP
    emulators: list
    n_zero: int
    width_bound: float | None = None

    def __call__(self, X):
        return forward(self.net, X)


def stack_networks(nets, C) -> MLP:
    """Parallel stack of scalar-output networks of equal depth with read-out ``C``.

    The output is ``sum_i C[:, i] * nets[i](x)``.
    """
    C = np.asarray(C, dtype=float)
    depth = nets[0].depth
    if any(n.depth != depth for n in nets):
        raise ValueError("networks must share the same depth")
    from scipy.linalg import block_diag

    Ws = [np.vstack([n.W[0] for n in nets])]
    bs = [np.concatenate([n.b[0] for n in nets])]
    for l in range(1, depth):
        Ws.append(block_diag(*[n.W[l] for n in nets]))
        bs.append(np.concatenate([n.b[l] for n in nets]))
    Ws.append(np.hstack([np.outer(C[:, i], n.W[-1][0]) for i, n in enumerate(nets)]))
    bs.append(sum(C[:, i] * n.b[-1][0] for i, n in enumerate(nets)))
    return MLP.from_layers(Ws, bs, "tanh")


def zero_network(d: int, depth: int) -> MLP:
    return MLP((d,) + (1,) * depth + (1,), "tanh")


def build_family_emulators(indices, delta: float, d: int, n_cert: int = 100_000, seed: int = 0):
    """Emulators for every index, all padded to the largest depth needed."""
    depth = max((emulator_depth(nu) for nu in indices), default=1)
    cache = {}
    out = []
    for nu in indices:
        if nu not in cache:
            cache[nu] = build_legendre_emulator(nu, delta, d, depth, n_cert, seed)
        out.append(cache[nu])
    return out, depth


def assemble_family_network(S: IndexSet, C, delta: float, k: float | None = None, w: WeightSystem = WeightSystem(),
                            d: int | None = None, n_cert: int = 20_000, seed: int = 0) -> FamilyNetwork:
    """``x -> C [N_nu1(x), ..., N_nu|S|(x), 0, ..., 0]^T``.

    ``C`` has ``floor(k)`` columns; those past ``|S|`` feed zero networks.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if k is None:
        k = float(weighted_cardinality(S, "v", w))
    if weighted_cardinality(S, "v", w) > k * (1 + 1e-12):
        raise ValueError("support exceeds the weighted budget")
    ncol = int(math.floor(k))
    if C.shape[1] != ncol:
        raise ValueError(f"C needs floor(k) = {ncol} columns, got {C.shape[1]}")
    d = S.dim_bound if d is None else d
    d = max(d, 1)
    ems, depth = build_family_emulators(list(S), delta, d, n_cert, seed)
    nets = [e.net for e in ems] + [zero_network(d, depth)] * (ncol - len(S))
    net = stack_networks(nets, C)
    bound = k ** (1.0 + 1.0 / w.exponent)
    return FamilyNetwork(net, ems, ncol - len(S), bound)


@dataclass
class InterpolatingMinimizer:
    net: MLP
    B: np.ndarray
    e: np.ndarray
    z: np.ndarray
    y: np.ndarray
    coefficients: np.ndarray
    rank: int
    sigma_min: float
    residual: float


def null_vector(B: np.ndarray, seed: int = 0) -> np.ndarray:
    """Seeded unit vector in the kernel of ``B`` (from the trailing right singular vectors)."""
    m, r = B.shape
    U, s, Vt = np.linalg.svd(B, full_matrices=True)
    rank = int(np.sum(s > 1e-12 * (s[0] if s.size else 1.0)))
    N = Vt[rank:].T
    if N.shape[1] == 0:
        raise np.linalg.LinAlgError("B has a trivial kernel")
    g = np.random.default_rng(seed).standard_normal(N.shape[1])
    z = N @ g
    return z / np.linalg.norm(z)


def build_interpolating_minimizer(polyfit, data, r: int, z_scale: float, seed: int = 0, delta: float = 1e-3,
                                  norm: DiscreteNorm | None = None, n_cert: int = 20_000) -> InterpolatingMinimizer:
    """Zero-loss network ``p~ + sum_i (B^+ e + y z)_i N_{e_i}``.

    ``p~`` emulates the polynomial fit; ``B = N_{e_j}(x_i) / sqrt(r)`` is
    built from the realized first-order emulators, ``e`` is the scaled
    residual of ``p~`` on the data, ``z`` a unit kernel vector of ``B`` scaled
    by ``z_scale`` and ``y`` a seeded unit output direction.
    """
    X, Y = data.X, data.Y
    m, d = X.shape
    if not r > m:
        raise ValueError("need r > m")
    if d < r:
        raise ValueError(f"inputs have {d} coordinates; the construction needs at least r = {r}")
    S = polyfit.expansion.support
    Chat = polyfit.expansion.coefficients
    K = Chat.shape[1]
    gamma = [MultiIndex.unit(j) for j in range(1, r + 1)]
    ems, depth = build_family_emulators(list(S) + gamma, delta, d, n_cert, seed)
    em_S, em_G = ems[: len(S)], ems[len(S):]
    ptilde = sum((np.outer(em(X), Chat[i]) for i, em in enumerate(em_S)), np.zeros((m, K)))
    B = np.column_stack([em(X) for em in em_G]) / math.sqrt(r)
    e = (Y - ptilde) / math.sqrt(r)
    U, s, Vt = np.linalg.svd(B, full_matrices=False)
    rank = int(np.sum(s > 1e-12 * s[0]))
    Bpe = Vt[:rank].T @ ((U[:, :rank].T @ e) / s[:rank, None])
    z = null_vector(B, seed)
    rng = np.random.default_rng(seed + 1)
    y = rng.standard_normal(K)
    ynorm = float(norm(y)) if norm is not None else float(np.linalg.norm(y))
    y = y / ynorm
    G = Bpe + z_scale * np.outer(z, y)
    C = np.hstack([Chat.T, G.T])
    net = stack_networks([em.net for em in ems], C)
    out = forward(net, X)
    R = out - Y
    res = float(np.max(norm(R))) if norm is not None else float(np.max(np.linalg.norm(R, axis=1)))
    return InterpolatingMinimizer(net, B, e, z, y, G, rank, float(s[rank - 1]) if rank else 0.0, res)
