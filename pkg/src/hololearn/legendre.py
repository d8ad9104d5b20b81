"""Orthonormal Legendre polynomials, vector-valued expansions and norms.

All polynomials are orthonormal for the uniform probability measure on
``[-1, 1]``: ``psi_n = sqrt(2n + 1) P_n`` with ``P_n(1) = 1``.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import qmc

from . import _kernels
from .multiindex import IndexSet, MultiIndex


class NumericalWarning(UserWarning):
    """Raised for flagged but non-fatal numerical conditions."""


def eval_psi(n: int, x):
    """Orthonormal Legendre polynomial of degree ``n`` at ``x`` (scalar or array)."""
    if n < 0:
        raise ValueError("degree must be nonnegative")
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) > 1.0):
        warnings.warn("eval_psi evaluated outside [-1, 1]", NumericalWarning, stacklevel=2)
    p_prev, p_cur = np.ones_like(xa), xa
    if n == 0:
        out = p_prev
    else:
        for j in range(1, n):
            p_prev, p_cur = p_cur, ((2 * j + 1) * xa * p_cur - j * p_prev) / (j + 1)
        out = p_cur
    out = math.sqrt(2 * n + 1) * out
    return float(out) if np.ndim(out) == 0 else out


def _legendre_pair(n: int, x):
    """``(P_n(x), P_{n-1}(x))`` by the three-term recurrence."""
    p_prev, p_cur = np.ones_like(x), x
    for j in range(1, n):
        p_prev, p_cur = p_cur, ((2 * j + 1) * x * p_cur - j * p_prev) / (j + 1)
    return p_cur, p_prev


def legendre_leading_coefficient(n: int) -> float:
    """Leading coefficient ``(2n)! / (2**n (n!)**2)`` of ``P_n``."""
    return math.comb(2 * n, n) / 2.0**n


def legendre_roots(n: int):
    """Roots of ``P_n`` (increasing) and its leading coefficient.

    Newton's method started from the Chebyshev points, at most 100 steps,
    stopping once every update is below 1e-14.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    k = np.arange(1, n + 1)
    x = np.cos((2 * k - 1) * np.pi / (2 * n))
    for _ in range(100):
        p, q = _legendre_pair(n, x)
        dp = n * (x * p - q) / (x * x - 1.0)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) <= 1e-14:
            break
    x = np.sort(x)
    # exact symmetry of the root set
    x = 0.5 * (x - x[::-1])
    if n % 2:
        x[n // 2] = 0.0
    return x, legendre_leading_coefficient(n)


def eval_Psi(nu: MultiIndex, x) -> float:
    """Tensor-product orthonormal Legendre polynomial at one point."""
    x = np.asarray(x, dtype=float)
    if nu.max_dim > x.shape[-1]:
        raise ValueError(f"point has {x.shape[-1]} coordinates, index needs {nu.max_dim}")
    out = 1.0
    for d, e in nu.entries:
        out *= eval_psi(e, x[d - 1])
    return out


def psi_matrix(Lambda: IndexSet, X) -> np.ndarray:
    """``Phi[i, j] = Psi_{nu_j}(X_i)`` for points ``X`` of shape ``(n, d)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    used = max((nu.max_dim for nu in Lambda), default=0)
    if used > d:
        raise ValueError(f"points have {d} coordinates, index set needs {used}")
    nmax = Lambda.max_degree()
    table = _kernels.psi_table(np.ascontiguousarray(X[:, :max(used, 1)]), nmax)
    dims, exps, offsets = _flatten_indices(Lambda)
    return _kernels.design_product(table, dims, exps, offsets)


def _flatten_indices(Lambda: IndexSet):
    dims, exps, offsets = [], [], [0]
    for nu in Lambda:
        for d, e in nu.entries:
            dims.append(d - 1)
            exps.append(e)
        offsets.append(len(dims))
    return (np.array(dims, dtype=np.int64), np.array(exps, dtype=np.int64),
            np.array(offsets, dtype=np.int64))


class VectorExpansion:
    """Finite Legendre expansion with coefficients in ``R^K``.

    ``coefficients`` has shape ``(len(support), K)``; row ``j`` belongs to
    ``support[j]``.
    """

    def __init__(self, support: IndexSet, coefficients, output_dim: int | None = None):
        c = np.asarray(coefficients, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if output_dim is None:
            output_dim = c.shape[1] if c.size else 0
        if c.size == 0:
            c = np.zeros((len(support), output_dim))
        if c.shape != (len(support), output_dim):
            raise ValueError(f"coefficients shape {c.shape} != ({len(support)}, {output_dim})")
        self.support = support
        self.coefficients = c
        self.output_dim = int(output_dim)

    def __call__(self, X) -> np.ndarray:
        return eval_expansion(self, X)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([nu.to_text() for nu in self.support])
        for k in range(self.output_dim):
            w.writerow([f"{v:.17g}" for v in self.coefficients[:, k]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, dim_bound: int | None = None) -> "VectorExpansion":
        rows = list(csv.reader(io.StringIO(text)))
        labels = [MultiIndex.from_text(s) for s in rows[0]]
        S = IndexSet(labels, dim_bound)
        if [S.position(nu) for nu in labels] != list(range(len(labels))):
            raise ValueError("expansion CSV columns are not in canonical order")
        data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float)
        return cls(S, data.T.reshape(len(S), len(rows) - 1), len(rows) - 1)


def eval_expansion(p: VectorExpansion, X) -> np.ndarray:
    """Evaluate at one point (returns ``(K,)``) or many points (``(n, K)``)."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    if len(p.support) == 0:
        out = np.zeros((X2.shape[0], p.output_dim))
    else:
        out = psi_matrix(p.support, X2) @ p.coefficients
    return out[0] if single else out


@dataclass(frozen=True)
class DiscreteNorm:
    """Norm on ``R^K`` approximating a function-space norm on the output grid.

    ``weighted-euclidean``: ``sqrt(sum w_k y_k**2)``;
    ``weighted-l4``: ``(sum w_k y_k**4) ** 0.25``;
    ``sup``: ``max |y_k|`` (weights unused).
    """

    kind: str
    weights: np.ndarray

    KINDS = ("weighted-euclidean", "weighted-l4", "sup")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}")
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or np.any(w <= 0):
            raise ValueError("norm weights must be a positive vector")
        object.__setattr__(self, "weights", w)

    @classmethod
    def unit(cls, K: int, kind: str = "weighted-euclidean") -> "DiscreteNorm":
        return cls(kind, np.ones(K))

    @classmethod
    def trapezoid(cls, K: int, kind: str = "weighted-euclidean") -> "DiscreteNorm":
        """Trapezoid masses of the uniform ``K``-point grid on ``[0, 1]``."""
        if K == 1:
            return cls(kind, np.ones(1))
        w = np.full(K, 1.0 / (K - 1))
        w[0] = w[-1] = 0.5 / (K - 1)
        return cls(kind, w)

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    def __call__(self, Y) -> np.ndarray:
        """Row-wise norms of ``Y`` with shape ``(..., K)``."""
        Y = np.asarray(Y, dtype=float)
        if Y.shape[-1] != self.K:
            raise ValueError(f"vector length {Y.shape[-1]} != K={self.K}")
        if self.kind == "weighted-euclidean":
            return np.sqrt(np.sum(self.weights * Y * Y, axis=-1))
        if self.kind == "weighted-l4":
            return np.sum(self.weights * Y**4, axis=-1) ** 0.25
        return np.max(np.abs(Y), axis=-1)


def _values_on(F, nodes) -> np.ndarray:
    if isinstance(F, VectorExpansion):
        vals = eval_expansion(F, nodes)
    elif callable(F):
        vals = F(nodes)
    else:
        vals = F
    vals = np.asarray(vals, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape[0] != nodes.shape[0]:
        raise ValueError("one value per quadrature node required")
    return vals


def bochner_l2_norm(F, rule, norm: DiscreteNorm | None = None) -> float:
    """``(sum_i w_i ||F(x_i)||_Y**2) ** 0.5`` on the nodes of ``rule``.

    ``F`` may be a ``VectorExpansion``, a callable on ``(n, d)`` arrays, or
    precomputed node values.  A negative estimate (possible with signed
    sparse-grid weights) is clamped to 0 with a ``NumericalWarning``.
    """
    vals = _values_on(F, rule.nodes)
    if norm is None:
        norm = DiscreteNorm.unit(vals.shape[1])
    sq = float(np.dot(rule.weights, norm(vals) ** 2))
    if sq < 0:
        warnings.warn(f"negative norm-square estimate {sq:.3e} clamped to 0", NumericalWarning, stacklevel=2)
        return 0.0
    return math.sqrt(sq)


def _largest_eig_power(M: np.ndarray, rtol: float = 1e-10, maxiter: int = 100000) -> float:
    """Largest algebraic eigenvalue of symmetric ``M`` by power iteration."""
    K = M.shape[0]
    if K == 1:
        return float(M[0, 0])
    v0 = np.random.default_rng(12345).standard_normal(K)

    def dominant(A):
        v = v0 / np.linalg.norm(v0)
        lam = float(v @ A @ v)
        for _ in range(maxiter):
            w = A @ v
            nw = np.linalg.norm(w)
            if nw == 0.0:
                return 0.0
            v = w / nw
            lam_new = float(v @ A @ v)
            if abs(lam_new - lam) <= rtol * abs(lam_new):
                return lam_new
            lam = lam_new
        return lam

    lam = dominant(M)
    if lam < 0:
        # dominant eigenvalue is negative: shift to expose the top of the spectrum
        shift = -lam
        lam = dominant(M + shift * np.eye(K)) - shift
    return lam


def pettis_l2_norm(F, rule, mass=None, kind: str = "weighted-euclidean") -> float:
    """Sup over unit dual functionals of the scalar L2 norms of ``F``.

    Euclidean case: square root of the top eigenvalue of the mass-weighted
    second-moment matrix (power iteration, relative tolerance 1e-10).  Sup-norm
    outputs: the largest coordinate-wise L2 norm.
    """
    vals = _values_on(F, rule.nodes)
    K = vals.shape[1]
    w = rule.weights
    if kind == "sup":
        sq = np.max(w @ (vals * vals))
    elif kind == "weighted-euclidean":
        mass = np.ones(K) if mass is None else np.asarray(mass, dtype=float)
        G = vals * np.sqrt(mass)
        M = G.T @ (w[:, None] * G)
        M = 0.5 * (M + M.T)
        sq = _largest_eig_power(M)
    else:
        raise NotImplementedError("Pettis norm is only available for euclidean and sup outputs")
    if sq < 0:
        warnings.warn(f"negative second moment {sq:.3e} clamped to 0", NumericalWarning, stacklevel=2)
        return 0.0
    return math.sqrt(float(sq))


def discrete_seminorm(G, norm: DiscreteNorm | None = None) -> float:
    """Root-mean-square of the Y-norms of the rows of ``G``."""
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = G[:, None]
    if G.shape[0] < 1:
        raise ValueError("need at least one sample")
    if norm is None:
        norm = DiscreteNorm.unit(G.shape[1])
    return math.sqrt(float(np.mean(norm(G) ** 2)))


def sign_corners(d: int) -> np.ndarray:
    """The ``2**min(d, 10)`` sign corners; coordinates past the tenth are +1."""
    dc = min(d, 10)
    bits = (np.arange(2**dc)[:, None] >> np.arange(dc)[None, :]) & 1
    out = np.ones((2**dc, d))
    out[:, :dc] = 1.0 - 2.0 * bits
    return out


def low_discrepancy_points(d: int, n: int, seed: int = 0) -> np.ndarray:
    """Scrambled Sobol points mapped to ``[-1, 1]^d``."""
    sob = qmc.Sobol(d, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # non power-of-two sizes are fine here
        u = sob.random(n)
    return 2.0 * u - 1.0


def sup_norm_estimate(f: Callable, d: int, n_samples: int = 4096, seed: int = 0,
                      norm: DiscreteNorm | None = None) -> float:
    """Sampled surrogate for the L-infinity norm of a scalar or vector field."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    X = np.vstack([low_discrepancy_points(d, n_samples, seed), sign_corners(d)])
    vals = f(X) if not isinstance(f, VectorExpansion) else eval_expansion(f, X)
    vals = np.asarray(vals, dtype=float)
    if vals.ndim == 1:
        return float(np.max(np.abs(vals)))
    if norm is None:
        return float(np.max(np.linalg.norm(vals, axis=1)))
    return float(np.max(norm(vals)))


def empirical_norm_ratio(F, X_sample, rule, norm: DiscreteNorm | None = None) -> float:
    """RMS Y-norm over samples from the data measure divided by the L2 norm.

    Empirical stand-in for the norm-equivalence constants between the
    sampling measure and the reference uniform measure.
    """
    num = discrete_seminorm(_values_on(F, np.atleast_2d(X_sample)), norm)
    den = bochner_l2_norm(F, rule, norm)
    if den == 0.0:
        raise ZeroDivisionError("reference norm is zero")
    return num / den
