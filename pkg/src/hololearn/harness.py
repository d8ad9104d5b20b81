"""Convergence experiments: trials, relative test errors, geometric statistics, slopes."""
from __future__ import annotations

import csv
import hashlib
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .legendre import DiscreteNorm
from .multiindex import WeightSystem, hyperbolic_cross
from .neural import MLP, CalibrationError, NonFiniteLossError, TrainConfig, init_he_uniform, train
from .operators import (ConfigError, EncoderDecoder, OperatorOracle, format_config_text, generate_training_set,
                        oracle_from_config, parse_config_text)
from .polyfit import assemble_design, greedy_sparse_fit, least_squares_fit, predicted_rates
from .quadrature import SparseGridRule, default_test_level, smolyak

DEFAULT_M_VALUES = (10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 200, 300, 400, 500)
METHODS = ("polyfit-ls", "polyfit-greedy", "mlp")
ZERO_CLAMP = 1e-16


@dataclass
class ExperimentSpec:
    oracle: dict
    method: str = "polyfit-ls"
    depth: int = 4
    width: int = 40
    activation: str = "tanh"
    m_values: tuple = DEFAULT_M_VALUES
    trials: int = 12
    noise_level: float = 0.0
    test_level: int | None = None
    seed_base: int = 0
    epochs: int = 60000
    index_n: int = 8
    budget_k: float | None = None
    xi: float = 0.0
    slope_window: tuple = (50, 500)

    def __post_init__(self):
        self.m_values = tuple(int(m) for m in self.m_values)
        if any(b <= a for a, b in zip(self.m_values, self.m_values[1:])):
            raise ConfigError("m_values must be strictly increasing")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")

    @classmethod
    def default_architecture(cls, N: int) -> tuple:
        """``(L, N)`` with the default depth-to-width ratio 0.5."""
        return max(1, round(0.5 * N)), N

    def to_config(self) -> dict:
        cfg = dict(self.oracle)
        cfg.update(method=self.method, arch=f"{self.depth}x{self.width}", activation=self.activation,
                   m_values=",".join(str(m) for m in self.m_values), trials=self.trials,
                   noise_level=repr(self.noise_level), seed_base=self.seed_base, epochs=self.epochs,
                   index_n=self.index_n, xi=repr(self.xi),
                   slope_window=f"{self.slope_window[0]},{self.slope_window[1]}")
        if self.test_level is not None:
            cfg["test_level"] = self.test_level
        if self.budget_k is not None:
            cfg["budget_k"] = repr(self.budget_k)
        return cfg

    @classmethod
    def from_config(cls, cfg: dict, fast: bool = False) -> "ExperimentSpec":
        oracle_keys = ("family", "d", "K", "noise", "norm", "source")
        orc = {k: cfg[k] for k in oracle_keys if k in cfg}
        oracle_from_config(orc)  # validates
        try:
            kw = {}
            if "method" in cfg:
                kw["method"] = cfg["method"]
            if "arch" in cfg:
                L, N = cfg["arch"].lower().split("x")
                kw["depth"], kw["width"] = int(L), int(N)
            if "activation" in cfg:
                kw["activation"] = cfg["activation"]
            if "m_values" in cfg:
                kw["m_values"] = tuple(int(v) for v in cfg["m_values"].split(","))
            for key, conv in (("trials", int), ("seed_base", int), ("epochs", int), ("index_n", int),
                              ("test_level", int), ("noise_level", float), ("budget_k", float), ("xi", float)):
                if key in cfg:
                    kw[key] = conv(cfg[key])
            if "slope_window" in cfg:
                lo, hi = cfg["slope_window"].split(",")
                kw["slope_window"] = (float(lo), float(hi))
        except (ValueError, AttributeError) as exc:
            raise ConfigError(f"bad experiment value: {exc}") from None
        if fast:
            kw["epochs"] = min(kw.get("epochs", 60000), 10000)
            kw["trials"] = min(kw.get("trials", 12), 3)
        return cls(orc, **kw)


def relative_test_error(Fhat, oracle, rule: SparseGridRule, norm: DiscreteNorm | None = None, F_values=None) -> float:
    """``(sum w_i ||F(x_i) - Fhat(x_i)||**2)**0.5 / (sum w_i ||F(x_i)||**2)**0.5`` on the rule nodes."""
    F = oracle(rule.nodes) if F_values is None else F_values
    G = Fhat(rule.nodes) if callable(Fhat) else np.asarray(Fhat, dtype=float)
    norm = oracle.output_norm if norm is None else norm
    den = float(np.dot(rule.weights, norm(F) ** 2))
    if not den > 0:
        raise ZeroDivisionError("reference operator has zero test norm")
    num = float(np.dot(rule.weights, norm(F - G) ** 2))
    return math.sqrt(max(num, 0.0) / den)


def geometric_stats(errors):
    """Geometric mean and the one-standard-deviation band on a log scale."""
    e = np.log(np.asarray(errors, dtype=float))
    mu = float(np.mean(e))
    sd = float(np.std(e, ddof=1)) if e.size > 1 else 0.0
    return math.exp(mu), math.exp(mu - sd), math.exp(mu + sd)


def fit_slope(m, values, window=(50, 500)) -> float:
    """Least-squares slope of ``log(values)`` against ``log(m)`` on ``window``."""
    m = np.asarray(m, dtype=float)
    v = np.asarray(values, dtype=float)
    sel = (m >= window[0]) & (m <= window[1])
    if np.count_nonzero(sel) < 2:
        raise ValueError("need at least two points in the slope window")
    x, y = np.log(m[sel]), np.log(v[sel])
    x = x - x.mean()
    return float(np.dot(x, y - y.mean()) / np.dot(x, x))


def trial_seed(seed_base: int, m: int, t: int) -> int:
    return int(np.random.SeedSequence([int(seed_base), int(m), int(t)]).generate_state(1, np.uint64)[0])


@dataclass
class ConvergenceTable:
    m_values: list
    errors: dict
    excluded: dict
    clamped: dict
    slope_window: tuple = (50, 500)
    manifest: str = ""
    failures: list = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        total = sum(len(self.errors[m]) + self.excluded[m] for m in self.m_values)
        return sum(self.excluded.values()) > 0.2 * total

    def stats(self, m):
        return geometric_stats(self.errors[m])

    def geomean(self) -> np.ndarray:
        return np.array([self.stats(m)[0] for m in self.m_values])

    def slope(self, window=None) -> float:
        return fit_slope(self.m_values, self.geomean(), window or self.slope_window)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# manifest {self.manifest}\n")
        try:
            buf.write(f"# slope {self.slope():.17g} window {self.slope_window[0]:g},{self.slope_window[1]:g}\n")
        except ValueError:
            pass
        if self.flagged:
            buf.write("# flagged: more than 20% of trials excluded\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "geomean", "geo_lo", "geo_hi", "n_trials", "n_excluded", "n_clamped"])
        for m in self.m_values:
            g, lo, hi = self.stats(m)
            w.writerow([m, f"{g:.17g}", f"{lo:.17g}", f"{hi:.17g}", len(self.errors[m]), self.excluded[m],
                        self.clamped[m]])
        return buf.getvalue()

    def trials_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# manifest {self.manifest}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "trial", "error"])
        for m in self.m_values:
            for t, e in enumerate(self.errors[m]):
                w.writerow([m, t, f"{e:.17g}"])
        return buf.getvalue()


def manifest_hash(spec: ExperimentSpec) -> str:
    """Git-style blob hash of the canonical configuration text."""
    text = format_config_text(dict(sorted(spec.to_config().items()))).encode()
    return hashlib.sha1(b"blob %d\0" % len(text) + text).hexdigest()


class _Context:
    """Per-experiment state shared by trials: oracle, test rule and reference values."""

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.oracle: OperatorOracle = oracle_from_config(spec.oracle)
        d = self.oracle.d
        level = spec.test_level if spec.test_level is not None else default_test_level(d, max(spec.m_values))
        self.rule = smolyak(d, level)
        self.F = self.oracle(self.rule.nodes)
        self.norm = self.oracle.output_norm
        self.Lambda = hyperbolic_cross(spec.index_n, d)


_CTX: _Context | None = None


def _init_worker(spec):
    global _CTX
    _CTX = _Context(spec)


def run_trial(ctx: _Context, m: int, t: int) -> float:
    spec = ctx.spec
    seed = trial_seed(spec.seed_base, m, t)
    data = generate_training_set(ctx.oracle, m, spec.noise_level, seed)
    norm = ctx.norm
    if spec.method == "mlp":
        enc = EncoderDecoder(ctx.oracle.d, ctx.oracle.K, norm.weights)
        dims = [ctx.oracle.d] + [spec.width] * spec.depth + [ctx.oracle.K]
        net = init_he_uniform(MLP(dims, spec.activation), t)
        cfg = TrainConfig(epochs=spec.epochs, seed=t)
        net, _ = train(net, data, enc, norm if norm.kind != "sup" else None, cfg)
        return relative_test_error(lambda X: enc.decode_y(net(enc.encode_x(X))), ctx.oracle, ctx.rule, norm, ctx.F)
    A = assemble_design(ctx.Lambda, data.X)
    fit_norm = norm if norm.kind == "weighted-l4" else None
    if spec.method == "polyfit-greedy":
        k = spec.budget_k if spec.budget_k is not None else float(len(ctx.Lambda))
        res = greedy_sparse_fit(A, data.Y, k, WeightSystem(spec.xi), fit_norm)
    else:
        res = least_squares_fit(A, data.Y, fit_norm)
    return relative_test_error(res.expansion, ctx.oracle, ctx.rule, norm, ctx.F)


_FAILURES = (NonFiniteLossError, CalibrationError, FloatingPointError, np.linalg.LinAlgError)


def _safe_trial(ctx, m, t):
    try:
        return m, t, run_trial(ctx, m, t), None
    except _FAILURES as exc:
        return m, t, None, f"{type(exc).__name__}: {exc}"


def _worker_trial(args):
    return _safe_trial(_CTX, *args)


def run_convergence(spec: ExperimentSpec, jobs: int = 1, context: _Context | None = None) -> ConvergenceTable:
    """All (m, trial) pairs, aggregated in a fixed order regardless of ``jobs``."""
    tasks = [(m, t) for m in spec.m_values for t in range(spec.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(spec,)) as ex:
            results = list(ex.map(_worker_trial, tasks))
    else:
        ctx = context or _Context(spec)
        results = [_safe_trial(ctx, m, t) for m, t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))
    errors = {m: [] for m in spec.m_values}
    excluded = {m: 0 for m in spec.m_values}
    clamped = {m: 0 for m in spec.m_values}
    failures = []
    for m, t, err, msg in results:
        if err is None:
            excluded[m] += 1
            failures.append((m, t, msg))
            continue
        if err <= 0:
            err = ZERO_CLAMP
            clamped[m] += 1
        errors[m].append(err)
    kept = [m for m in spec.m_values if errors[m]]
    return ConvergenceTable(kept, {m: errors[m] for m in kept}, {m: excluded[m] for m in kept},
                            {m: clamped[m] for m in kept}, tuple(spec.slope_window), manifest_hash(spec), failures)


@dataclass
class Overlay:
    m: np.ndarray
    empirical: np.ndarray
    predicted: np.ndarray
    exponent: float

    def to_csv(self, manifest: str = "") -> str:
        buf = io.StringIO()
        buf.write(f"# manifest {manifest}\n# overlay exponent {self.exponent:.17g}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "geomean", "predicted"])
        for row in zip(self.m, self.empirical, self.predicted):
            w.writerow([int(row[0])] + [f"{v:.17g}" for v in row[1:]])
        return buf.getvalue()


def theory_overlay(table: ConvergenceTable, b=None, p: float = 2 / 3, hilbert: bool = True) -> Overlay:
    """Predicted power law anchored to the table at its smallest ``m``.

    ``b`` enters only through constants, which are shape-only here.
    """
    m = np.asarray(table.m_values, dtype=float)
    emp = table.geomean()
    curve = predicted_rates(b, p, m, hilbert=hilbert, include_log=False)
    pred = curve.values * (emp[0] / curve.values[0])
    pred[0] = emp[0]
    return Overlay(m, emp, pred, curve.exponent)


def load_spec(path: str, fast: bool = False) -> ExperimentSpec:
    with open(path) as fh:
        return ExperimentSpec.from_config(parse_config_text(fh.read()), fast)
