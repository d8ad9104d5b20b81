"""Lower-bound sequences, best s-term tails and random-matrix probes."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

HEAD = 200_000


def _damped(x, a):
    """``(x log(x)**2) ** -a``."""
    x = np.asarray(x, dtype=float)
    return (x * np.log(x) ** 2) ** (-a)


def _damped_tail(a: float, L: int) -> float:
    """``sum_{i > L} (i log(i)**2) ** -a`` by Euler-Maclaurin around ``x = L``.

    The integral uses the substitution ``x = exp(t)``; ``a = 1`` has the
    closed form ``1 / log(L)``.
    """
    if a == 1.0:
        integral = 1.0 / math.log(L)
    else:
        integral, _ = integrate.quad(lambda t: math.exp(t * (1 - a)) * t ** (-2 * a), math.log(L), math.inf,
                                     epsabs=0.0, epsrel=1e-13, limit=200)
    fL = float(_damped(L, a))
    # f'(x) = -a f(x) (1/x + 2/(x log x))
    dfL = -a * fL * (1.0 / L + 2.0 / (L * math.log(L)))
    return integral - 0.5 * fL - dfL / 12.0


def _fsum_sorted(v: np.ndarray) -> float:
    return math.fsum(np.sort(v))


@dataclass
class LowerBoundSequence:
    """Nonincreasing sequences with unit ``l^p`` norm.

    ``flat-2m``: ``2m`` equal entries ``(2m)**(-1/p)``.  ``log-damped``:
    ``c_p (i log(i)**2)**(-1/p)`` for ``i >= 2`` and ``b_1 = b_2``; entries
    past ``HEAD`` are accounted for by an asymptotic tail sum.
    """

    kind: str
    p: float
    m: int = 1
    c_p: float = field(init=False, default=1.0)

    def __post_init__(self):
        if self.kind not in ("flat-2m", "log-damped"):
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        if not 0 < self.p < 1:
            raise ValueError("need 0 < p < 1")
        if self.kind == "log-damped":
            a = 1.0 / self.p
            raw = _damped(np.arange(2, HEAD + 1), a) ** self.p  # = 1/(i log^2 i)
            total = _fsum_sorted(raw) + raw[0] + _damped_tail(1.0, HEAD)
            self.c_p = total ** (-1.0 / self.p)

    def head(self, n: int) -> np.ndarray:
        """The first ``n`` entries ``b_1, ..., b_n``."""
        if self.kind == "flat-2m":
            out = np.zeros(n)
            out[: min(n, 2 * self.m)] = (2 * self.m) ** (-1.0 / self.p)
            return out
        i = np.arange(1, n + 1, dtype=float)
        i[0] = 2.0
        return self.c_p * _damped(i, 1.0 / self.p)

    def tail_power_sum(self, s: int, q: float) -> float:
        """``sum_{i > s} b_i**q``."""
        if self.kind == "flat-2m":
            n = max(2 * self.m - s, 0)
            return n * (2 * self.m) ** (-q / self.p)
        if s >= HEAD:
            raise ValueError(f"s must be below {HEAD}")
        b = self.head(HEAD)[s:]
        return _fsum_sorted(b**q) + self.c_p**q * _damped_tail(q / self.p, HEAD)

    def lp_norm(self, q: float | None = None) -> float:
        q = self.p if q is None else q
        return self.tail_power_sum(0, q) ** (1.0 / q)


def sigma_s(seq: LowerBoundSequence, s: int, q: float) -> float:
    """Best ``s``-term error in ``l^q``: for nonincreasing sequences, the tail after ``s``."""
    if s < 0:
        raise ValueError("s must be >= 0")
    return seq.tail_power_sum(s, q) ** (1.0 / q)


def sigma_s_closed_forms(seq: LowerBoundSequence, s: int, q: int = 2):
    """``(numeric, closed_form)``; the closed form exists for ``flat-2m`` only.

    Numeric values sum the sorted entries explicitly; the closed form is
    ``(2m - s)**(1/q) (2m)**(-1/p)`` (which is ``2**(-1/p) m**(1/2 - 1/p)`` at
    ``s = m``, ``q = 2``).
    """
    if seq.kind == "flat-2m":
        n = 2 * seq.m
        entries = seq.head(n)[s:]
        numeric = math.fsum(entries**q) ** (1.0 / q)
        closed = max(n - s, 0) ** (1.0 / q) * n ** (-1.0 / seq.p)
        return numeric, closed
    return sigma_s(seq, s, q), None


def log_damped_lower_estimate(p: float, m: int, c_p: float) -> float:
    """``c_p sqrt(m) (2m log(2m)**2)**(-1/p)``, an analytic lower estimate of ``sigma_m(b)_2``."""
    return c_p * math.sqrt(m) * (2 * m * math.log(2 * m) ** 2) ** (-1.0 / p)


@dataclass
class RateFloor:
    m: np.ndarray
    exponent: float
    floor: np.ndarray
    sigma_based: np.ndarray
    norm_q: float


def rate_floor(kind: str, p: float, m_values, norm_q: float = 2) -> RateFloor:
    """Shape-only lower-bound curves and the matching best-term quantities.

    ``norm_q = 2``: ``m**(1/2 - 1/p)`` next to ``sigma_m(b)_2``.
    ``norm_q = inf``: ``m**(1 - 1/p)`` next to ``sigma_m(b)_1 / log(m)``.
    """
    m = np.asarray(m_values, dtype=int)
    if norm_q == 2:
        e = 0.5 - 1.0 / p
    elif math.isinf(norm_q):
        e = 1.0 - 1.0 / p
    else:
        raise ValueError("norm_q must be 2 or inf")
    sig = []
    base = LowerBoundSequence(kind, p) if kind == "log-damped" else None
    for mi in m:
        seq = base if base is not None else LowerBoundSequence(kind, p, int(mi))
        if norm_q == 2:
            sig.append(sigma_s(seq, int(mi), 2))
        else:
            sig.append(sigma_s(seq, int(mi), 1) / math.log(mi))
    return RateFloor(m.astype(float), e, m.astype(float) ** e, np.array(sig), norm_q)


def _seed_rng(seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [int(k) for k in key]))


def unit_null_vector(A: np.ndarray, tol: float = 1e-12):
    """Last right singular vector of ``A`` (m x (m+1)) and whether the kernel is 1-dimensional."""
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    simple = s.size == 0 or s[-1] > tol * s[0]
    return Vt[-1], simple


@dataclass
class SpikinessReport:
    m_values: list
    stats: dict
    redraws: dict

    def medians(self) -> dict:
        return {m: float(np.median(v)) for m, v in self.stats.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "trial", "statistic"])
        for m in self.m_values:
            for t, v in enumerate(self.stats[m]):
                w.writerow([m, t, f"{v:.17g}"])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "median", "q10", "q90"])
        for m in self.m_values:
            v = self.stats[m]
            w.writerow([m] + [f"{x:.17g}" for x in (np.median(v), np.quantile(v, 0.1), np.quantile(v, 0.9))])
        return buf.getvalue()


def nullspace_spikiness(m_values, trials: int, seed: int = 0) -> SpikinessReport:
    """``(m+1) ||u||_inf**2`` for unit null vectors of uniform ``m x (m+1)`` matrices."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    stats, redraws = {}, {}
    for m in m_values:
        vals = np.empty(trials)
        redraws[m] = 0
        for t in range(trials):
            rng = _seed_rng(seed, m, t)
            while True:
                A = rng.uniform(-1.0, 1.0, (m, m + 1))
                u, simple = unit_null_vector(A)
                if simple:
                    break
                redraws[m] += 1
            vals[t] = (m + 1) * float(np.max(np.abs(u))) ** 2
        stats[m] = vals
    return SpikinessReport(list(m_values), stats, redraws)


@dataclass
class SigmaMinReport:
    fraction: float
    quantiles: dict
    sigmas: np.ndarray
    threshold: float


OMEGA_UNIFORM = 1.0 / 3.0


def subgaussian_sigma_min(m: int, r: int, trials: int, seed: int = 0) -> SigmaMinReport:
    """Smallest singular values of ``sqrt(3) sqrt(omega/r) A`` with ``A`` (r x m) standardized uniform."""
    if r < m:
        raise ValueError("need r >= m")
    omega = OMEGA_UNIFORM
    thr = math.sqrt(omega) / 2.0
    sig = np.empty(trials)
    for t in range(trials):
        rng = _seed_rng(seed, m, r, t)
        A = rng.uniform(-1.0, 1.0, (r, m)) / math.sqrt(omega)
        B = math.sqrt(3.0) * math.sqrt(omega / r) * A
        sig[t] = np.linalg.svd(B, compute_uv=False)[-1]
    q = {k: float(np.quantile(sig, k)) for k in (0.1, 0.5, 0.9)}
    return SigmaMinReport(float(np.mean(sig >= thr)), q, sig, thr)
