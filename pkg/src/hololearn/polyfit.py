"""Polynomial training problem: design matrices, least squares, greedy budgets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .legendre import DiscreteNorm, VectorExpansion, discrete_seminorm, psi_matrix
from .multiindex import IndexSet, WeightSystem, weight_sq, weighted_cardinality


@dataclass
class DesignMatrix:
    """``A[i, j] = Psi_{nu_j}(X_i) / sqrt(m)`` with columns in canonical order."""

    A: np.ndarray
    column_index: IndexSet

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.A.shape[1]


@dataclass
class PolyFitResult:
    expansion: VectorExpansion
    residual_rms: float
    selected_set: IndexSet
    alpha_estimate: float | None = None
    rank_deficient: bool = False
    rank: int = 0
    iterations: int = 0
    loss_start: float | None = None
    loss_final: float | None = None
    history: list = field(default_factory=list)
    budget: float | None = None

    def metadata(self) -> dict:
        out = {"residual_rms": f"{self.residual_rms:.17g}", "rank": self.rank,
               "rank_deficient": int(self.rank_deficient), "iterations": self.iterations,
               "n_terms": len(self.selected_set),
               "selected_set": ";".join(nu.to_text() for nu in self.selected_set)}
        for key in ("loss_start", "loss_final", "budget", "alpha_estimate"):
            val = getattr(self, key)
            if val is not None:
                out[key] = f"{val:.17g}"
        return out

    def write(self, path: str) -> None:
        """Expansion CSV at ``path`` plus a ``key = value`` sidecar at ``path + '.meta'``."""
        with open(path, "w") as fh:
            fh.write(self.expansion.to_csv())
        with open(path + ".meta", "w") as fh:
            for k, v in self.metadata().items():
                fh.write(f"{k} = {v}\n")


def assemble_design(Lambda: IndexSet, X) -> DesignMatrix:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return DesignMatrix(psi_matrix(Lambda, X) / math.sqrt(X.shape[0]), Lambda)


def _solve_ls(A: np.ndarray, B: np.ndarray, col_weights=None):
    """Least squares; pivoted QR when well posed, SVD otherwise.

    When the problem is underdetermined or rank deficient the solution
    minimizing ``sum_j col_weights[j]**2 |c_j|**2`` is returned (plain
    minimum norm when ``col_weights`` is None).
    """
    m, N = A.shape
    if N == 0:
        return np.zeros((0, B.shape[1])), 0, False
    if m >= N:
        Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        if diag[-1] > 1e-12 * diag[0]:
            sol = np.empty((N, B.shape[1]))
            sol[piv] = scipy.linalg.solve_triangular(R, Q.T @ B)
            return sol, N, False
    scale = np.ones(N) if col_weights is None else np.asarray(col_weights, dtype=float)
    U, s, Vt = np.linalg.svd(A / scale, full_matrices=False)
    rank = int(np.sum(s > 1e-12 * s[0])) if s.size and s[0] > 0 else 0
    sol = Vt[:rank].T @ ((U[:, :rank].T @ B) / s[:rank, None])
    return sol / scale[:, None], rank, rank < min(m, N)


def empirical_loss(Phi: np.ndarray, C: np.ndarray, Y: np.ndarray, norm: DiscreteNorm | None) -> float:
    """``1/m sum ||Y_i - (Phi C)_i||_Y**2``."""
    R = Y - Phi @ C
    if norm is None:
        return float(np.mean(np.sum(R * R, axis=1)))
    return float(np.mean(norm(R) ** 2))


def _l4_loss_grad(Phi, C, Y, w):
    R = Y - Phi @ C
    R2 = R * R
    root = np.sqrt(R2 * R2 @ w)
    loss = float(np.mean(root))
    inv = np.divide(2.0, root, out=np.zeros_like(root), where=root > 0)
    G = (R2 * R) * w * inv[:, None]
    grad = -(Phi.T @ G) / Phi.shape[0]
    return loss, grad


def _descend_l4(Phi, Y, C0, w, rtol=1e-10, max_iter=10_000):
    """Gradient descent with Armijo backtracking; trial steps of Barzilai-Borwein type."""
    C = C0.copy()
    loss, grad = _l4_loss_grad(Phi, C, Y, w)
    start = loss
    step = 1.0
    prev_C, prev_g = None, None
    it = 0
    for it in range(1, max_iter + 1):
        gg = float(np.sum(grad * grad))
        if gg == 0.0:
            break
        if prev_C is not None:
            sk, yk = C - prev_C, grad - prev_g
            sy = float(np.sum(sk * yk))
            if sy > 0:
                step = float(np.sum(sk * sk)) / sy
        accepted = False
        for _ in range(60):
            C_new = C - step * grad
            loss_new, grad_new = _l4_loss_grad(Phi, C_new, Y, w)
            if loss_new <= loss - 1e-4 * step * gg:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        prev_C, prev_g = C, grad
        change = (loss - loss_new) / max(loss, 1e-300)
        C, loss, grad = C_new, loss_new, grad_new
        if change <= rtol:
            break
    return C, start, loss, it


def least_squares_fit(A: DesignMatrix, Y, norm: DiscreteNorm | None = None, min_norm: str | None = "u") -> PolyFitResult:
    """Minimize the empirical loss over expansions supported on ``A.column_index``.

    Euclidean (or unspecified) norms use pivoted QR with an SVD fallback;
    rank deficiency is flagged on the result.  Among minimizers, ``min_norm``
    picks the one of least ``sum u_nu**2 |c_nu|**2`` ("u", the sup norms of
    the basis functions) or of least plain coefficient norm (None).  The
    weighted-l4 norm starts from that solution and runs gradient descent with
    backtracking until the relative loss change is at most 1e-10.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    m = A.m
    if Y.shape[0] != m:
        raise ValueError("Y must have one row per sample")
    cw = None if min_norm is None else A.column_index.weights(min_norm)
    C, rank, deficient = _solve_ls(A.A, Y / math.sqrt(m), cw)
    Phi = A.A * math.sqrt(m)
    res = PolyFitResult(VectorExpansion(A.column_index, C, Y.shape[1]), 0.0, A.column_index,
                        rank_deficient=deficient, rank=rank)
    if norm is not None and norm.kind == "weighted-l4":
        C, start, final, iters = _descend_l4(Phi, Y, C, norm.weights)
        res.expansion = VectorExpansion(A.column_index, C, Y.shape[1])
        res.loss_start, res.loss_final, res.iterations = start, final, iters
    elif norm is not None and norm.kind != "weighted-euclidean":
        raise NotImplementedError(f"no iterative solver for the {norm.kind!r} norm")
    else:
        res.loss_final = empirical_loss(Phi, C, Y, norm)
        res.loss_start = res.loss_final
    res.residual_rms = discrete_seminorm(Y - Phi @ C, norm)
    return res


def greedy_sparse_fit(A: DesignMatrix, Y, k: float, w: WeightSystem = WeightSystem(),
                      norm: DiscreteNorm | None = None) -> PolyFitResult:
    """Orthogonal-matching-pursuit selection under the budget ``|S|_v <= k``.

    Each step adds the feasible index with the largest residual correlation
    divided by its v-weight, then refits by least squares on the selection.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    Lam = A.column_index
    if k < 1:
        raise ValueError("budget must be at least the weight of the zero index")
    if weighted_cardinality(Lam, "v", w) <= k:
        res = least_squares_fit(A, Y, norm)
        res.budget = k
        return res
    m = A.m
    Bsc = Y / math.sqrt(m)
    mass = np.ones(Y.shape[1]) if norm is None else norm.weights
    costs = [weight_sq(nu, "v", w) for nu in Lam]
    vw = np.sqrt(np.array([float(c) for c in costs]))
    chosen: list[int] = []
    total = 0
    R = Bsc.copy()
    history = [math.sqrt(float(np.sum(R * R * mass)))]
    C_sel = np.zeros((0, Y.shape[1]))
    scale = max(history[0], 1e-300)
    while True:
        corr = A.A.T @ R
        score = np.sqrt(np.sum(corr * corr * mass, axis=1)) / vw
        best, best_score = -1, 0.0
        for j in range(len(Lam)):
            if j in chosen:
                continue
            if not (total + costs[j] <= k if w.integer_xi else total + costs[j] <= k * (1 + 1e-12)):
                continue
            if score[j] > best_score:
                best, best_score = j, score[j]
        if best < 0 or best_score <= 1e-14 * scale:
            break
        chosen.append(best)
        total = total + costs[best]
        cols = sorted(chosen)
        C_sel, _, _ = _solve_ls(A.A[:, cols], Bsc)
        R = Bsc - A.A[:, cols] @ C_sel
        history.append(math.sqrt(float(np.sum(R * R * mass))))
    cols = sorted(chosen)
    S = IndexSet([Lam[j] for j in cols], Lam.dim_bound)
    if cols:
        C_sel, rank, deficient = _solve_ls(A.A[:, cols], Bsc)
    else:
        rank, deficient = 0, False
    Phi = A.A[:, cols] * math.sqrt(m)
    res = PolyFitResult(VectorExpansion(S, C_sel, Y.shape[1]), discrete_seminorm(Y - Phi @ C_sel, norm), S,
                        rank_deficient=deficient, rank=rank, history=history, budget=k)
    res.loss_final = res.loss_start = res.residual_rms**2
    return res


@dataclass
class AlphaProbe:
    alpha: float
    trials: int


def alpha_probe(Lambda: IndexSet, k: float, w: WeightSystem, X, trials: int = 100, seed: int = 0,
                weight: str = "v") -> AlphaProbe:
    """Empirical upper bound on the discrete-metric constant alpha.

    Each trial draws a random budget-feasible support (random visiting order,
    keep what fits) and Gaussian coefficients on it, and records
    ``||A c|| / ||c||``, the ratio of the discrete seminorm to the L2 norm
    (Parseval).  The minimum over trials is returned.
    """
    A = assemble_design(Lambda, X).A
    rng = np.random.default_rng(seed)
    costs = [weight_sq(nu, weight, w) for nu in Lambda]
    best = math.inf
    for _ in range(trials):
        order = rng.permutation(len(Lambda))
        cols, total = [], 0
        for j in order:
            if total + costs[j] <= k:
                cols.append(j)
                total += costs[j]
        if not cols:
            continue
        c = rng.standard_normal(len(cols))
        ratio = float(np.linalg.norm(A[:, cols] @ c) / np.linalg.norm(c))
        best = min(best, ratio)
    return AlphaProbe(best, trials)


@dataclass
class RateCurve:
    m: np.ndarray
    values: np.ndarray
    exponent: float
    L: np.ndarray


def rate_exponent(p: float, hilbert: bool = True, q: float = 2) -> float:
    """``theta + 1 - 1/q - 1/p`` with ``theta = 0`` (Hilbert) or ``1/2`` (Banach)."""
    theta = 0.0 if hilbert else 0.5
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    return theta + 1.0 - inv_q - 1.0 / p


def predicted_rates(b, p: float, m_values, hilbert: bool = True, q: float = 2, eps: float = 0.5,
                    include_log: bool = True) -> RateCurve:
    """Shape-only algebraic rate ``(m / L) ** exponent``.

    ``L = log(m)**4 + log(1/eps)`` when ``include_log``; otherwise ``L = 1``
    and the curve is the pure power law in ``m``.  Constants depending on
    ``b`` are set to 1.
    """
    if not 0 < p < 1:
        raise ValueError("need 0 < p < 1")
    m = np.asarray(m_values, dtype=float)
    L = np.log(m) ** 4 + math.log(1.0 / eps) if include_log else np.ones_like(m)
    e = rate_exponent(p, hilbert, q)
    return RateCurve(m, (m / L) ** e, e, L)
