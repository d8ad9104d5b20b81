"""Sparse multi-indices, weight systems, hyperbolic crosses and best-k-term tools.

A multi-index is stored as a sorted tuple of ``(dim, exp)`` pairs with
1-based dimensions and strictly positive exponents.  Index sets are kept in a
canonical order: graded by total degree, then by the dense exponent vector in
descending lexicographic order (so ``e1`` precedes ``e2`` and ``2e1``
precedes ``e1 + e2``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class MultiIndex:
    """Finitely supported exponent vector.

    Parameters
    ----------
    entries : iterable of (dim, exp) pairs or mapping
        Dimensions are 1-based.  Zero exponents are dropped.
    """

    __slots__ = ("_entries", "_hash")

    def __init__(self, entries=()):
        if isinstance(entries, dict):
            entries = entries.items()
        merged = {}
        for dim, exp in entries:
            dim, exp = int(dim), int(exp)
            if dim < 1:
                raise ValueError(f"dimension must be >= 1, got {dim}")
            if exp < 0:
                raise ValueError(f"exponent must be >= 0, got {exp}")
            if dim in merged:
                raise ValueError(f"dimension {dim} given twice")
            if exp > 0:
                merged[dim] = exp
        self._entries = tuple(sorted(merged.items()))
        self._hash = hash(self._entries)

    @classmethod
    def zero(cls) -> "MultiIndex":
        return cls()

    @classmethod
    def unit(cls, j: int, exp: int = 1) -> "MultiIndex":
        return cls([(j, exp)])

    @classmethod
    def from_dense(cls, vec: Sequence[int]) -> "MultiIndex":
        return cls((k + 1, e) for k, e in enumerate(vec) if e)

    @property
    def entries(self) -> tuple:
        return self._entries

    @property
    def support(self) -> tuple:
        return tuple(d for d, _ in self._entries)

    @property
    def order(self) -> int:
        """Total degree ``||nu||_1``."""
        return sum(e for _, e in self._entries)

    @property
    def max_dim(self) -> int:
        return self._entries[-1][0] if self._entries else 0

    def is_zero(self) -> bool:
        return not self._entries

    def get(self, dim: int) -> int:
        for d, e in self._entries:
            if d == dim:
                return e
        return 0

    def dense(self, d: int) -> np.ndarray:
        if self.max_dim > d:
            raise ValueError(f"index {self} does not fit in {d} dimensions")
        out = np.zeros(d, dtype=int)
        for dim, e in self._entries:
            out[dim - 1] = e
        return out

    def sort_key(self):
        return (self.order, tuple((dim, -e) for dim, e in self._entries))

    def __le__(self, other):
        """Componentwise order."""
        return all(e <= other.get(d) for d, e in self._entries)

    def __add__(self, other):
        acc = dict(self._entries)
        for d, e in other.entries:
            acc[d] = acc.get(d, 0) + e
        return MultiIndex(acc)

    def __eq__(self, other):
        return isinstance(other, MultiIndex) and self._entries == other._entries

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()

    def to_text(self) -> str:
        return " ".join(f"{d}:{e}" for d, e in self._entries)

    @classmethod
    def from_text(cls, line: str) -> "MultiIndex":
        pairs = []
        for tok in line.split():
            d, e = tok.split(":")
            pairs.append((int(d), int(e)))
        return cls(pairs)

    def __repr__(self):
        if not self._entries:
            return "MultiIndex(0)"
        return "MultiIndex(" + " + ".join(f"{e}e{d}" if e > 1 else f"e{d}" for d, e in self._entries) + ")"


@dataclass(frozen=True)
class WeightSystem:
    """Weights ``v = u ** (5 + xi)`` on top of the intrinsic ``u`` weights."""

    xi: float = 0.0

    def __post_init__(self):
        if not self.xi >= 0:
            raise ValueError("xi must be nonnegative")

    @property
    def exponent(self) -> float:
        return 5.0 + self.xi

    @property
    def integer_xi(self) -> bool:
        return float(self.xi).is_integer()


def _u_sq_int(nu: MultiIndex) -> int:
    out = 1
    for _, e in nu.entries:
        out *= 2 * e + 1
    return out


def u_weight(nu: MultiIndex) -> float:
    """Intrinsic weight, the sup norm of the tensor Legendre polynomial."""
    return math.prod(math.sqrt(2 * e + 1) for _, e in nu.entries)


def v_weight(nu: MultiIndex, w: WeightSystem = WeightSystem()) -> float:
    return u_weight(nu) ** w.exponent


def weight_sq(nu: MultiIndex, weight: str = "v", w: WeightSystem = WeightSystem()):
    """Squared weight.  Exact integer for ``u`` and for ``v`` with integer xi."""
    usq = _u_sq_int(nu)
    if weight == "u":
        return usq
    if weight != "v":
        raise ValueError(f"unknown weight family {weight!r}")
    if w.integer_xi:
        return usq ** (5 + int(w.xi))
    return float(usq) ** w.exponent


class IndexSet:
    """Deduplicated, canonically ordered finite set of multi-indices."""

    def __init__(self, indices: Iterable[MultiIndex] = (), dim_bound: int | None = None):
        uniq = sorted(set(indices), key=MultiIndex.sort_key)
        top = max((nu.max_dim for nu in uniq), default=0)
        if dim_bound is None:
            dim_bound = top
        if top > dim_bound:
            raise ValueError(f"index with dimension {top} exceeds dim_bound={dim_bound}")
        self.indices = tuple(uniq)
        self.dim_bound = int(dim_bound)
        self._pos = {nu: i for i, nu in enumerate(uniq)}

    def __eq__(self, other):
        return isinstance(other, IndexSet) and self.indices == other.indices and self.dim_bound == other.dim_bound

    def __hash__(self):
        return hash((self.indices, self.dim_bound))

    def __repr__(self):
        return f"IndexSet({list(self.indices)}, dim_bound={self.dim_bound})"

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __getitem__(self, i):
        return self.indices[i]

    def __contains__(self, nu):
        return nu in self._pos

    def position(self, nu: MultiIndex) -> int:
        return self._pos[nu]

    def union(self, other: "IndexSet") -> "IndexSet":
        return IndexSet(self.indices + other.indices, max(self.dim_bound, other.dim_bound))

    def intersection(self, other: "IndexSet") -> "IndexSet":
        return IndexSet([nu for nu in self.indices if nu in other], max(self.dim_bound, other.dim_bound))

    def max_degree(self) -> int:
        return max((e for nu in self.indices for _, e in nu.entries), default=0)

    def weights(self, weight: str = "v", w: WeightSystem = WeightSystem()) -> np.ndarray:
        if weight == "u":
            return np.array([u_weight(nu) for nu in self.indices])
        return np.array([v_weight(nu, w) for nu in self.indices])

    def is_downward_closed(self) -> bool:
        for nu in self.indices:
            for d, e in nu.entries:
                lower = dict(nu.entries)
                lower[d] = e - 1
                if MultiIndex(lower) not in self:
                    return False
        return True

    def to_text(self) -> str:
        return "".join(nu.to_text() + "\n" for nu in self.indices)

    @classmethod
    def from_text(cls, text: str, dim_bound: int | None = None) -> "IndexSet":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines = lines[:-1]
        return cls([MultiIndex.from_text(line) for line in lines], dim_bound)


def weighted_cardinality(S: IndexSet, weight: str = "v", w: WeightSystem = WeightSystem()):
    """``sum over S of weight**2``; exact when the squared weights are integers."""
    return sum((weight_sq(nu, weight, w) for nu in S), 0)


def hyperbolic_cross(n: int, d: int | None = None) -> IndexSet:
    """All nu with prod over the support of (nu_k + 1) <= n and support in {1..n}.

    ``d`` optionally restricts the support further to the first ``d``
    dimensions (the set then has ``dim_bound = min(n, d)``).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    dmax = n if d is None else min(n, d)
    out = [MultiIndex.zero()]

    def extend(prefix, last, budget):
        for j in range(last + 1, dmax + 1):
            e = 1
            while e + 1 <= budget:
                entries = prefix + ((j, e),)
                out.append(MultiIndex(entries))
                extend(entries, j, budget // (e + 1))
                e += 1

    extend((), 0, n)
    return IndexSet(out, dmax)


def _within_budget(total, k, w: WeightSystem) -> bool:
    if w.integer_xi:
        return total <= k
    return total <= k * (1.0 + 1e-12)


def truncate_to_budget(Lambda: IndexSet, k: float, w: WeightSystem, scores: Sequence[float]) -> IndexSet:
    """Greedy member of ``{S in Lambda : |S|_v <= k}``.

    Indices are visited by decreasing ``score / v**2`` (ties in canonical
    order) and kept whenever the budget still allows them.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (len(Lambda),):
        raise ValueError("need one score per index")
    if np.any(scores < 0):
        raise ValueError("scores must be nonnegative")
    costs = [weight_sq(nu, "v", w) for nu in Lambda]
    ratio = scores / np.array([float(c) for c in costs])
    order = sorted(range(len(Lambda)), key=lambda i: -ratio[i])  # stable on ties
    chosen, total = [], 0
    for i in order:
        if _within_budget(total + costs[i], k, w):
            chosen.append(Lambda[i])
            total = total + costs[i]
    return IndexSet(chosen, Lambda.dim_bound)


def weighted_lq_norm(c, q: float, weights=None) -> float:
    """``(sum w**(2-q) |c|**q) ** (1/q)``; ``q = inf`` gives ``max |c|/w``."""
    c = np.abs(np.asarray(c, dtype=float))
    wts = np.ones_like(c) if weights is None else np.asarray(weights, dtype=float)
    if c.size == 0:
        return 0.0
    if math.isinf(q):
        return float(np.max(c / wts))
    return float(np.sum(wts ** (2.0 - q) * c ** q) ** (1.0 / q))


def stechkin_error(c, s: float, q: float, p: float, weights=None):
    """Weighted best-k-term tail and its Stechkin bound.

    Parameters
    ----------
    c : array_like
        Nonnegative coefficients.
    s : float
        Weighted budget ``k`` on ``sum over S of w**2``.
    q, p : float
        ``0 < p < q <= 2``.
    weights : array_like, optional
        Per-entry weights ``w_nu >= 1``; all ones when omitted.

    Returns
    -------
    (error, bound)
        ``error`` is the tail norm outside the greedy set, which takes entries
        by decreasing ``c / w`` as long as the prefix stays within budget.
        ``bound = ||c||_{p,w} * s**(1/q - 1/p)``.
    """
    if not (0 < p < q):
        raise ValueError(f"need 0 < p < q, got p={p}, q={q}")
    if q > 2:
        raise ValueError("q must be <= 2")
    c = np.asarray(c, dtype=float)
    if np.any(c < 0) or not np.all(np.isfinite(c)):
        raise ValueError("c must be finite and nonnegative")
    wts = np.ones_like(c) if weights is None else np.asarray(weights, dtype=float)
    if wts.shape != c.shape:
        raise ValueError("weights must match c")
    order = np.argsort(-(c / wts), kind="stable")
    cum = np.cumsum(wts[order] ** 2)
    n_keep = int(np.searchsorted(cum, s * (1.0 + 1e-12), side="right"))
    tail = order[n_keep:]
    error = weighted_lq_norm(c[tail], q, wts[tail])
    bound = weighted_lq_norm(c, p, wts) * s ** (1.0 / q - 1.0 / p) if s > 0 else math.inf
    if not np.any(c):
        bound = 0.0
    return error, bound


def monotone_majorant(z) -> np.ndarray:
    """``z~_i = sup_{j >= i} |z_j|`` for a finite sequence."""
    z = np.abs(np.asarray(z, dtype=float))
    return np.maximum.accumulate(z[::-1])[::-1]

