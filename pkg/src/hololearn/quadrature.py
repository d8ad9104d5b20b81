"""Gauss-Legendre, Clenshaw-Curtis and Smolyak sparse-grid rules on [-1, 1]^d.

All weights are normalized for the uniform probability measure, so every
rule integrates the constant 1 to 1.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class Rule1D:
    nodes: np.ndarray
    weights: np.ndarray
    level: int
    family: str = "clenshaw-curtis"

    def __len__(self):
        return self.nodes.shape[0]


@dataclass(frozen=True)
class SparseGridRule:
    """Nodes ``(n, d)`` and weights ``(n,)``; weights may be negative."""

    dim: int
    level: int
    nodes: np.ndarray
    weights: np.ndarray
    family: str = "clenshaw-curtis"

    def __len__(self):
        return self.nodes.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{k + 1}" for k in range(self.dim)] + ["w"])
        for x, wt in zip(self.nodes, self.weights):
            w.writerow([f"{v:.17g}" for v in x] + [f"{wt:.17g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, level: int = -1, family: str = "custom") -> "SparseGridRule":
        rows = list(csv.reader(io.StringIO(text)))
        d = len(rows[0]) - 1
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, d + 1)
        return cls(d, level, data[:, :d], data[:, d], family)


def _symmetrize(x: np.ndarray) -> np.ndarray:
    """Force an exactly symmetric, increasing node set (middle node exactly 0)."""
    n = x.shape[0]
    x = np.sort(x)
    x = 0.5 * (x - x[::-1])
    if n % 2:
        x[n // 2] = 0.0
    return x


@lru_cache(maxsize=None)
def _gauss_cached(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x = _symmetrize(x)
    w = 0.5 * (w + w[::-1]) / 2.0
    return x, w


def gauss_legendre(n: int) -> Rule1D:
    """``n``-point Gauss rule, exact through degree ``2n - 1``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x, w = _gauss_cached(n)
    return Rule1D(x.copy(), w.copy(), n - 1, "gauss")


def _cc_nodes(level: int) -> np.ndarray:
    if level == 0:
        return np.zeros(1)
    N = 2**level
    k = np.arange(N // 2 + 1)
    half = -np.cos(np.pi * (k / N))  # k/N is exact, so nested levels agree bitwise
    half[-1] = 0.0
    return np.concatenate([half, -half[-2::-1]])


@lru_cache(maxsize=None)
def _cc_cached(level: int):
    if level == 0:
        return np.zeros(1), np.ones(1)
    N = 2**level
    k = np.arange(N + 1)
    w = np.ones(N + 1)
    for j in range(1, N // 2 + 1):
        b = 1.0 if 2 * j == N else 2.0
        w -= b / (4.0 * j * j - 1.0) * np.cos(2.0 * j * k * np.pi / N)
    c = np.full(N + 1, 2.0)
    c[0] = c[-1] = 1.0
    w = c * w / N / 2.0
    w = 0.5 * (w + w[::-1])
    return _cc_nodes(level), w


def clenshaw_curtis(level: int) -> Rule1D:
    """Nested Clenshaw-Curtis rule: 1 node at level 0, ``2**level + 1`` after."""
    if level < 0:
        raise ValueError("level must be >= 0")
    x, w = _cc_cached(level)
    return Rule1D(x.copy(), w.copy(), level, "clenshaw-curtis")


def _rule1d(family: str, level: int):
    if family == "clenshaw-curtis":
        return _cc_cached(level)
    if family == "gauss":
        return _gauss_cached(level + 1)
    raise ValueError(f"unknown quadrature family {family!r}")


def _compositions(d: int, total: int):
    """All ``i`` in N_0^d with ``|i|_1 == total``."""
    if d == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(d - 1, total - first):
            yield (first,) + rest


def smolyak(d: int, level: int, family: str = "clenshaw-curtis") -> SparseGridRule:
    """Isotropic Smolyak rule by the combination technique.

    Duplicate nodes are merged with summed weights; nodes of both families
    are generated canonically, so coinciding nodes agree bitwise.  Output
    nodes are sorted lexicographically.
    """
    if d < 1 or level < 0:
        raise ValueError("need d >= 1 and level >= 0")
    acc: dict = {}
    for tot in range(max(0, level - d + 1), level + 1):
        coef = (-1) ** (level - tot) * math.comb(d - 1, level - tot)
        for idx in _compositions(d, tot):
            active = [k for k in range(d) if idx[k] > 0]
            rules = [_rule1d(family, idx[k]) for k in active]
            for combo in itertools.product(*[range(len(r[0])) for r in rules]):
                x = [0.0] * d
                wt = float(coef)
                for k, r, j in zip(active, rules, combo):
                    x[k] = r[0][j]
                    wt *= r[1][j]
                key = tuple(x)
                acc[key] = acc.get(key, 0.0) + wt
    keys = sorted(acc)
    nodes = np.array(keys, dtype=float).reshape(len(keys), d)
    weights = np.array([acc[k] for k in keys])
    return SparseGridRule(d, level, nodes, weights, family)


def tensor_gauss(d: int, n: int) -> SparseGridRule:
    """Full tensor Gauss rule with ``n`` points per direction."""
    x, w = _gauss_cached(n)
    nodes = np.array(list(itertools.product(x, repeat=d)), dtype=float).reshape(-1, d)
    weights = np.prod(np.array(list(itertools.product(w, repeat=d))).reshape(-1, d), axis=1)
    return SparseGridRule(d, n - 1, nodes, weights, "gauss-tensor")


def pairwise_sum(a: np.ndarray) -> np.ndarray:
    """Sum along axis 0 by a fixed binary tree (order independent of BLAS)."""
    a = np.asarray(a, dtype=float)
    if a.shape[0] == 0:
        return np.zeros(a.shape[1:])
    while a.shape[0] > 1:
        if a.shape[0] % 2:
            a = np.concatenate([a, np.zeros((1,) + a.shape[1:])])
        a = a[0::2] + a[1::2]
    return a[0]


def integrate(rule, f):
    """``sum_i w_i f(x_i)`` with pairwise summation in sorted node order.

    ``f`` is a callable on ``(n, d)`` arrays or an array of node values.
    """
    vals = f(rule.nodes) if callable(f) else f
    vals = np.asarray(vals, dtype=float)
    if vals.shape[0] != len(rule.weights):
        raise ValueError("one value per node required")
    w = rule.weights.reshape((-1,) + (1,) * (vals.ndim - 1))
    out = pairwise_sum(w * vals)
    return float(out) if out.ndim == 0 else out


def cc_node_count(d: int, level: int) -> int:
    """Node count of the nested CC Smolyak rule without building it."""
    new = [1, 2] + [2 ** (j - 1) for j in range(2, level + 1)]
    # poly[t] = number of points with level-sum t over the dims processed so far
    poly = [1] + [0] * level
    for _ in range(d):
        nxt = [0] * (level + 1)
        for t, c in enumerate(poly):
            if c:
                for j in range(level + 1 - t):
                    nxt[t + j] += c * new[j]
        poly = nxt
    return sum(poly)


def default_test_level(d: int, m_max: int, factor: int = 20, cap: int = 100_000) -> int:
    """Smallest level with at least ``factor * m_max`` nodes, never above ``cap`` nodes."""
    target = factor * m_max
    level = 0
    while cc_node_count(d, level) < target:
        if cc_node_count(d, level + 1) > cap:
            break
        level += 1
    return level


def exactness_level_1d(degree: int, family: str = "clenshaw-curtis") -> int:
    """Smallest 1D level integrating ``x**degree`` exactly."""
    level = 0
    while True:
        n = len(_rule1d(family, level)[0])
        exact = n if (family == "clenshaw-curtis" and n % 2) else 2 * n - 1
        if family == "clenshaw-curtis" and level == 0:
            exact = 1
        if degree <= exact:
            return level
        level += 1


def in_exactness_set(dense_degrees, level: int, family: str = "clenshaw-curtis") -> bool:
    """Whether the monomial/Legendre degree vector is integrated exactly."""
    return sum(exactness_level_1d(int(e), family) for e in dense_degrees) <= level
