"""Ground-truth parametric operators and training data.

The main oracle maps parameters ``x in [-1, 1]^d`` to the nodal values of
the solution of the two-point problem ``-(a(z, x) u')' = f`` on ``(0, 1)``
with ``u(0) = u(1) = 0``.  The 1D problem is solved semi-analytically:
``u(z) = int_0^z (C - F(t)) / a(t) dt`` with ``F(t) = int_0^t f`` and ``C``
fixed by ``u(1) = 0``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .legendre import DiscreteNorm, bochner_l2_norm
from .quadrature import _gauss_cached


class InvalidFieldError(ValueError):
    """Coefficient field is not strictly positive."""


class ConfigError(ValueError):
    """Malformed oracle or experiment configuration."""


BETA_C = 1.0 / 8.0
BETA_P = max(1.0, 2.0 * BETA_C)
BETA = BETA_C / BETA_P


def _log_a2_terms(d: int):
    """Scale ``zeta_j`` and (kind, frequency) of ``theta_j`` for j = 2..d."""
    out = []
    for j in range(2, d + 1):
        h = j // 2
        zeta = math.sqrt(math.sqrt(math.pi) * BETA) * math.exp(-((h * math.pi * BETA) ** 2) / 8.0)
        out.append((j, zeta, "sin" if j % 2 == 0 else "cos", h * math.pi / BETA_P))
    return out


@dataclass
class CoefficientField:
    """Parametric diffusion coefficient ``a(z, x)`` on ``z in [0, 1]``.

    ``kind`` is ``affine-a1``, ``log-a2`` or ``custom-affine``.  The custom
    kind uses ``params = {"a0": float, "phis": [callable z -> array]}`` and
    computes ``a0 + sum_j x_j phi_j(z)``.
    """

    kind: str
    d: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("affine-a1", "log-a2", "custom-affine"):
            raise ConfigError(f"unknown coefficient kind {self.kind!r}")
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.kind == "custom-affine" and len(self.params.get("phis", ())) != self.d:
            raise ConfigError("custom-affine needs one phi per dimension")

    def evaluate(self, z, X) -> np.ndarray:
        """Values on the grid ``z`` for each parameter row: shape ``(n, len(z))``."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        X = np.atleast_2d(np.asarray(X, dtype=float))[:, : self.d]
        if X.shape[1] != self.d:
            raise ValueError(f"parameter has {X.shape[1]} coordinates, field needs {self.d}")
        if self.kind == "affine-a1":
            j = np.arange(1, self.d + 1)
            basis = np.sin(np.pi * np.outer(j, z)) / j[:, None] ** 1.5
            return 2.62 + X @ basis
        if self.kind == "log-a2":
            expo = 1.0 + X[:, :1] * math.sqrt(math.sqrt(math.pi) * BETA / 2.0)
            expo = np.broadcast_to(expo, (X.shape[0], z.shape[0])).copy()
            for j, zeta, trig, freq in _log_a2_terms(self.d):
                th = np.sin(freq * z) if trig == "sin" else np.cos(freq * z)
                expo += np.outer(X[:, j - 1], zeta * th)
            return np.exp(expo)
        basis = np.array([np.broadcast_to(phi(z), z.shape) for phi in self.params["phis"]])
        a = self.params.get("a0", 1.0) + X @ basis
        if np.any(a <= 0):
            raise InvalidFieldError("custom coefficient is not strictly positive")
        return a

    @property
    def holomorphy_b(self) -> np.ndarray:
        j = np.arange(1, self.d + 1, dtype=float)
        if self.kind == "affine-a1":
            return j**-1.5
        if self.kind == "log-a2":
            b = [math.sqrt(math.sqrt(math.pi) * BETA / 2.0)]
            b += [zeta for _, zeta, _, _ in _log_a2_terms(self.d)]
            return np.array(b)
        zz = np.linspace(0.0, 1.0, 1025)
        return np.array([np.max(np.abs(phi(zz))) for phi in self.params["phis"]])

    @property
    def r_min(self) -> float:
        """Lower bound on ``a`` over the parameter box."""
        if self.kind == "affine-a1":
            return 2.62 - float(np.sum(self.holomorphy_b))
        if self.kind == "log-a2":
            return math.exp(1.0 - float(np.sum(self.holomorphy_b)))
        return self.params.get("a0", 1.0) - float(np.sum(self.holomorphy_b))


def eval_coefficient(fld: CoefficientField, z, x) -> float | np.ndarray:
    """Coefficient at one parameter point; scalar ``z`` gives a scalar."""
    vals = fld.evaluate(z, np.asarray(x, dtype=float).reshape(1, -1))[0]
    if np.any(vals <= 0):
        raise InvalidFieldError("coefficient is not strictly positive")
    return float(vals[0]) if np.ndim(z) == 0 else vals


def _cumulative_source(f_rhs, t: np.ndarray) -> np.ndarray:
    """``F(t) = int_0^t f``."""
    if callable(f_rhs):
        s, w = _gauss_cached(30)
        s = 0.5 * (s + 1.0)  # nodes on (0, 1), weights already sum to 1
        vals = f_rhs(np.outer(t, s))
        return t * (np.asarray(vals, dtype=float) @ w)
    return float(f_rhs) * t


def solve_diffusion_1d(fld, X, f_rhs=10.0, K: int = 257, z=None, points_per_cell: int = 6) -> np.ndarray:
    """Nodal values of the two-point boundary value problem solution.

    Parameters
    ----------
    fld : CoefficientField or callable
        A callable must map ``(z_array, X)`` to coefficient values ``(n, len(z))``.
    X : array_like
        One parameter point ``(d,)`` or a batch ``(n, d)``.
    f_rhs : float or callable
        Source term; a callable takes an array of ``z`` values.
    K : int
        Number of uniform grid nodes on ``[0, 1]`` (ignored if ``z`` is given).
    z : array_like, optional
        Increasing evaluation nodes starting at 0 and ending at 1.
    points_per_cell : int
        Gauss points per grid cell (at least 4).

    Returns
    -------
    ndarray
        ``(K,)`` for a single point, ``(n, K)`` for a batch.
    """
    if points_per_cell < 4:
        raise ValueError("need at least 4 Gauss points per cell")
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    zg = np.linspace(0.0, 1.0, K) if z is None else np.asarray(z, dtype=float)
    if zg[0] != 0.0 or zg[-1] != 1.0 or np.any(np.diff(zg) <= 0):
        raise ValueError("evaluation nodes must increase from 0 to 1")
    s, w = _gauss_cached(points_per_cell)
    h = np.diff(zg)
    t = (zg[:-1, None] + 0.5 * h[:, None] * (s[None, :] + 1.0)).ravel()
    wt = (h[:, None] * w[None, :]).ravel()  # weights of the uniform measure sum to 1 per cell
    evaluate = fld.evaluate if isinstance(fld, CoefficientField) else fld
    a = evaluate(t, X2)
    if np.any(a <= 0) or not np.all(np.isfinite(a)):
        raise InvalidFieldError("coefficient is not strictly positive")
    F = _cumulative_source(f_rhs, t)
    ncell = zg.shape[0] - 1
    q = points_per_cell
    i1 = ((1.0 / a) * wt).reshape(-1, ncell, q).sum(axis=2)
    i2 = ((F / a) * wt).reshape(-1, ncell, q).sum(axis=2)
    zeros = np.zeros((X2.shape[0], 1))
    c1 = np.concatenate([zeros, np.cumsum(i1, axis=1)], axis=1)
    c2 = np.concatenate([zeros, np.cumsum(i2, axis=1)], axis=1)
    C = c2[:, -1:] / c1[:, -1:]
    u = C * c1 - c2
    u[:, -1] = 0.0
    return u[0] if single else u


class OperatorOracle:
    """Deterministic map from parameters to output vectors in ``R^K``.

    Parameters beyond the first ``d`` coordinates are ignored, which lets
    the same oracle serve padded encoders.
    """

    family = "diffusion"

    def __init__(self, fld: CoefficientField, K: int = 257, source: float = 10.0,
                 norm_kind: str = "weighted-euclidean", noise: float = 0.0):
        if K < 2:
            raise ConfigError("K must be >= 2")
        self.field = fld
        self.d = fld.d
        self.K = int(K)
        self.source = source
        self.noise = float(noise)
        self.output_norm = DiscreteNorm.trapezoid(self.K, norm_kind)
        self.grid = np.linspace(0.0, 1.0, self.K)

    @property
    def holomorphy_b(self) -> np.ndarray:
        return self.field.holomorphy_b

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            return solve_diffusion_1d(self.field, X[: self.d], self.source, self.K)
        return solve_diffusion_1d(self.field, X[:, : self.d], self.source, self.K)

    def config(self) -> dict:
        return {"family": self.field.kind, "d": self.d, "K": self.K, "noise": self.noise,
                "norm": self.output_norm.kind, "source": self.source}


class SyntheticAffineOracle(OperatorOracle):
    """``x -> sqrt(3) * (sum_i c_i x_i) * y``."""

    family = "synthetic-affine"

    def __init__(self, b, c, y, norm_kind: str = "weighted-euclidean", noise: float = 0.0, mass=None):
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.d = self.c.shape[0]
        self.K = self.y.shape[0]
        self.noise = float(noise)
        self.source = 0.0
        self.output_norm = DiscreteNorm(norm_kind, np.ones(self.K) if mass is None else mass)
        self.grid = np.linspace(0.0, 1.0, self.K)

    @property
    def holomorphy_b(self) -> np.ndarray:
        return self.b

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        s = math.sqrt(3.0) * (X[..., : self.d] @ self.c)
        return np.multiply.outer(s, self.y)

    def config(self) -> dict:
        return {"family": "synthetic-affine", "d": self.d, "K": self.K, "noise": self.noise,
                "norm": self.output_norm.kind, "source": 0.0}


def synthetic_affine_family(b, c, y, norm_kind: str = "weighted-euclidean", mass=None) -> SyntheticAffineOracle:
    """Affine oracle with coefficients bounded by the holomorphy sequence ``b``."""
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    if b.shape != c.shape:
        raise ConfigError("b and c must have the same length")
    if np.any(np.abs(c) > b):
        raise ConfigError("need |c_i| <= b_i for every i")
    return SyntheticAffineOracle(b, c, y, norm_kind, mass=mass)


def holomorphy_sequence(d: int) -> np.ndarray:
    """``b_j = j**-1.5``, the sequence of the affine coefficient."""
    return np.arange(1, d + 1, dtype=float) ** -1.5


CONFIG_KEYS = ("family", "d", "K", "noise", "norm", "source")


def oracle_from_config(cfg: dict) -> OperatorOracle:
    missing = [k for k in CONFIG_KEYS if k not in cfg]
    if missing:
        raise ConfigError(f"missing oracle keys: {missing}")
    try:
        family = str(cfg["family"])
        d, K = int(cfg["d"]), int(cfg["K"])
        noise, source = float(cfg["noise"]), float(cfg["source"])
        norm = str(cfg["norm"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad oracle value: {exc}") from None
    if norm not in DiscreteNorm.KINDS:
        raise ConfigError(f"unknown norm {norm!r}")
    if noise < 0:
        raise ConfigError("noise must be >= 0")
    if family == "synthetic-affine":
        b = holomorphy_sequence(d)
        y = np.zeros(K)
        y[0] = 1.0
        orc = synthetic_affine_family(b, b, y, norm)
        orc.noise = noise
        return orc
    if family not in ("affine-a1", "log-a2"):
        raise ConfigError(f"unknown oracle family {family!r}")
    return OperatorOracle(CoefficientField(family, d), K, source, norm, noise)


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        if not k:
            raise ConfigError(f"line {n}: empty key")
        out[k] = v
    return out


def format_config_text(cfg: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.items())


@dataclass
class TrainingSet:
    X: np.ndarray
    Y: np.ndarray
    noise_level: float
    seed: int
    E: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.X.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d, K = self.X.shape[1], self.Y.shape[1]
        w.writerow([f"x{k + 1}" for k in range(d)] + [f"y{k + 1}" for k in range(K)])
        for x, y in zip(self.X, self.Y):
            w.writerow([f"{v:.17g}" for v in x] + [f"{v:.17g}" for v in y])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, noise_level: float = 0.0, seed: int = -1) -> "TrainingSet":
        rows = list(csv.reader(io.StringIO(text)))
        d = sum(1 for h in rows[0] if h.startswith("x"))
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
        return cls(data[:, :d], data[:, d:], noise_level, seed)


def sample_generator(seed: int, i: int) -> np.random.Generator:
    """Counter-based stream for sample ``i``: Philox keyed by ``(seed, i)``."""
    key = (int(seed) % 2**64) | ((int(i) % 2**64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def _ball_noise(rng: np.random.Generator, norm: DiscreteNorm, eta: float) -> np.ndarray:
    K = norm.K
    g = rng.standard_normal(K)
    radius = eta * rng.random() ** (1.0 / K)
    if norm.kind == "weighted-euclidean":
        # uniform in the ellipsoid {e : sum w e^2 <= eta^2}
        return radius * g / np.linalg.norm(g) / np.sqrt(norm.weights)
    nrm = float(norm(g))
    return radius * g / nrm


def generate_training_set(oracle: OperatorOracle, m: int, noise_level: float = 0.0, seed: int = 0,
                          d_eff: int | None = None) -> TrainingSet:
    """``m`` i.i.d. uniform parameters with (optionally noisy) oracle outputs.

    ``d_eff`` pads the parameters with extra uniform coordinates that the
    oracle ignores.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    d = oracle.d if d_eff is None else int(d_eff)
    if d < oracle.d:
        raise ValueError("d_eff must be >= oracle.d")
    X = np.empty((m, d))
    E = np.zeros((m, oracle.K))
    for i in range(m):
        rng = sample_generator(seed, i)
        X[i] = 2.0 * rng.random(d) - 1.0
        if noise_level > 0:
            E[i] = _ball_noise(rng, oracle.output_norm, noise_level)
    Y = oracle(X) + E
    return TrainingSet(X, Y, float(noise_level), int(seed), E)


@dataclass
class EncoderDecoder:
    """Truncation encoder on the parameters and nodal decoder on the outputs.

    ``keep`` lists the output nodes the decoder retains (all by default); the
    dropped nodal values decode to zero.
    """

    d_X: int
    d_Y: int
    mass: np.ndarray
    keep: np.ndarray | None = None

    def encode_x(self, X):
        return np.asarray(X, dtype=float)[..., : self.d_X]

    def decode_x(self, c):
        return np.asarray(c, dtype=float)

    def encode_y(self, Y):
        Y = np.asarray(Y, dtype=float)
        if self.keep is None:
            return Y
        out = np.zeros_like(Y)
        out[..., self.keep] = Y[..., self.keep]
        return out

    def decode_y(self, c):
        return np.asarray(c, dtype=float)


@dataclass
class EncoderDecoderErrors:
    E_X2: float
    E_Y2: float


def encoder_decoder_error_terms(oracle: OperatorOracle, enc_dec: EncoderDecoder, rule) -> EncoderDecoderErrors:
    """Quadrature estimates of ``||I - D o E||`` on the input and output sides."""
    X = rule.nodes
    dx = X - enc_dec.decode_x(enc_dec.encode_x(X))
    ex = bochner_l2_norm(dx, rule, DiscreteNorm.unit(X.shape[1]))
    Y = oracle(X)
    dy = Y - enc_dec.decode_y(enc_dec.encode_y(Y))
    ey = bochner_l2_norm(dy, rule, oracle.output_norm)
    return EncoderDecoderErrors(ex, ey)


def l2_grid_norm(u, K: int | None = None) -> float:
    """Trapezoid L2(0, 1) norm of nodal values on a uniform grid."""
    u = np.asarray(u, dtype=float)
    nrm = DiscreteNorm.trapezoid(u.shape[-1] if K is None else K)
    return float(nrm(u))


def custom_affine_field(a0: float, phis: list[Callable]) -> CoefficientField:
    return CoefficientField("custom-affine", len(phis), {"a0": a0, "phis": phis})
