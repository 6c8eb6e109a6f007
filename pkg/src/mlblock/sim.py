"""Synthetic panels and placebo Monte Carlo evaluation of designs."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import PanelDataset
from .designs import CompleteRandomization
from .errors import BadSpec, TooFewPeriods
from .estimation import ols_block_estimate
from .report import write_csv, write_markdown
from .seeds import derive

H_KINDS = ("linear", "step", "nonlinear")
DEFAULT_REPS = 10_000


@dataclass(frozen=True)
class SyntheticDGPSpec:
    """``y_it = h_t(X_i) + u_it`` with ``u_it = rho * u_i,t-1 + eps_it``.

    ``h_t`` applies coefficient vector ``beta_t`` through ``kind``:
    ``linear`` uses ``x``, ``step`` uses ``1[x > 0]`` and ``nonlinear`` uses
    ``x**2 + sin(2x)``. The base vector gives ``coef`` to the first
    ``active`` covariates unless ``coefficients`` is set. When ``dynamic``
    each period gets its own random permutation of the base vector.
    Periods are ``pre1 .. pre(n_periods - 1), post``.
    """

    n: int = 100
    K: int = 20
    kind: str = "linear"
    active: int = 3
    coef: float = 1.0
    coefficients: tuple | None = None
    persistence: float = 0.8
    noise_sd: float = 1.0
    n_periods: int = 3
    dynamic: bool = False
    seed: int = 0

    def validate(self) -> "SyntheticDGPSpec":
        if self.n < 2:
            raise BadSpec("n must be at least 2")
        if self.K < 0 or not 0 <= self.active <= self.K:
            raise BadSpec(f"need 0 <= active <= K, got active={self.active}, K={self.K}")
        if self.coefficients is not None and len(self.coefficients) != self.K:
            raise BadSpec("coefficients must have length K")
        if self.kind not in H_KINDS:
            raise BadSpec(f"kind must be one of {H_KINDS}")
        if self.n_periods < 2:
            raise BadSpec("n_periods must be at least 2")
        if not abs(self.persistence) < 1:
            raise BadSpec("|persistence| must be below 1")
        if self.noise_sd < 0:
            raise BadSpec("noise_sd must be non-negative")
        return self

    @property
    def periods(self) -> tuple:
        return tuple(f"pre{t}" for t in range(1, self.n_periods)) + ("post",)

    def base_coefficients(self) -> np.ndarray:
        if self.coefficients is not None:
            return np.asarray(self.coefficients, dtype=float)
        beta = np.zeros(self.K)
        beta[: self.active] = self.coef
        return beta


def h_transform(X, kind: str) -> np.ndarray:
    if kind == "linear":
        return X
    if kind == "step":
        return (X > 0).astype(float)
    return X**2 + np.sin(2 * X)


def generate_synthetic_panel(spec: SyntheticDGPSpec) -> PanelDataset:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, T = spec.n, spec.n_periods
    X = rng.standard_normal((n, spec.K))
    base = spec.base_coefficients()
    betas = [base[rng.permutation(spec.K)] if spec.dynamic else base for _ in range(T)]
    H = h_transform(X, spec.kind)
    eps = rng.standard_normal((n, T)) * spec.noise_sd
    u = np.empty((n, T))
    u[:, 0] = eps[:, 0] / math.sqrt(1 - spec.persistence**2)
    for t in range(1, T):
        u[:, t] = spec.persistence * u[:, t - 1] + eps[:, t]
    Y = np.column_stack([H @ betas[t] for t in range(T)]) + u
    width = len(str(n - 1))
    return PanelDataset(
        unit_ids=tuple(f"u{i:0{width}d}" for i in range(n)),
        outcomes=Y,
        periods=spec.periods,
        covariates=X,
        covariate_names=tuple(f"x{k + 1}" for k in range(spec.K)),
    )


@dataclass(frozen=True)
class MethodRow:
    method: str
    coefficient_mse: float
    mse_mc_se: float
    mean_se: float
    se_mc_se: float
    mean_beta: float
    beta_mc_se: float
    mse_ratio: float
    se_ratio: float
    n_reps: int
    seed: int
    b: int | None = None


ROW_HEADER = [
    "method", "coefficient_mse", "mse_mc_se", "mean_se", "se_mc_se", "mean_beta", "beta_mc_se",
    "mse_ratio", "se_ratio", "n_reps", "seed", "b",
]


@dataclass(frozen=True)
class SimulationReport:
    rows: tuple
    n_reps: int
    seed: int
    eval_period: str
    metadata: dict = field(default_factory=dict)

    def row(self, method: str) -> MethodRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    @property
    def baseline(self) -> MethodRow:
        return self.rows[0]

    def table(self):
        return [[getattr(r, h) for h in ROW_HEADER] for r in self.rows]

    def to_csv(self, path) -> None:
        write_csv(path, ROW_HEADER, self.table())

    def to_markdown(self, path) -> None:
        header = ["method", "coefficient_mse", "mse_ratio", "mean_se", "se_ratio", "b"]
        rows = [[r.method, r.coefficient_mse, r.mse_ratio, r.mean_se, r.se_ratio, r.b] for r in self.rows]
        title = f"Placebo simulation ({self.n_reps} reps, outcome {self.eval_period})"
        write_markdown(path, header, rows, title=title)


def scenario_table(reports: dict, metric: str = "mse_ratio"):
    """Method x scenario matrix of one metric from several reports."""
    methods = list(dict.fromkeys(r.method for rep in reports.values() for r in rep.rows))
    header = ["method", *reports]
    rows = []
    for m in methods:
        row = [m]
        for rep in reports.values():
            try:
                row.append(getattr(rep.row(m), metric))
            except KeyError:
                row.append(None)
        rows.append(row)
    return header, rows


def _eval_period(panel: PanelDataset, eval_period):
    if eval_period is not None:
        if not panel.has(eval_period):
            raise TooFewPeriods(f"panel has no period {eval_period!r}")
        return eval_period
    if panel.has("post"):
        return "post"
    if not panel.pre_periods:
        raise TooFewPeriods("no outcome period to evaluate on")
    return panel.pre_periods[-1]


def _mean_and_se(v: np.ndarray) -> tuple[float, float]:
    m = float(np.sum(v) / len(v))
    se = float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else float("nan")
    return m, se


def run_placebo_sims(
    panel: PanelDataset,
    methods,
    n_reps: int = DEFAULT_REPS,
    seed: int = 0,
    eval_period: str | None = None,
    refit: bool = False,
    threads: int = 1,
    metadata: dict | None = None,
) -> SimulationReport:
    """Placebo evaluation: the true effect is zero, so every estimate is error.

    Each method is fit once on the panel with ``eval_period`` withheld (any
    attempt to read it raises LeakageError); replication ``r`` then draws an
    assignment with seed ``derive(seed, 1, r)``, shared by all methods, and
    regresses the evaluation outcome on treatment plus block or pair dummies.
    A ``complete`` baseline is always the first row. ``refit`` refits the
    design every replication.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    label = _eval_period(panel, eval_period)
    design_panel = panel.withhold(label)
    y = panel.outcome(label)
    methods = list(methods)
    if not any(getattr(m, "name", None) == "complete" for m in methods):
        methods.insert(0, CompleteRandomization())
    else:
        methods.sort(key=lambda m: m.name != "complete")
    rep_seeds = [derive(seed, 1, r) for r in range(n_reps)]

    def one_method(i_m):
        i, method = i_m
        fit_seed = derive(seed, 0, i)
        fitted = None if refit else method.fit(design_panel, fit_seed)
        out = np.empty((n_reps, 2))
        for r, s in enumerate(rep_seeds):
            f = method.fit(design_panel, derive(fit_seed, r)) if refit else fitted
            a = f.draw(s)
            est = ols_block_estimate(y, a.d, a.group_of)
            out[r] = est.beta_hat, est.se
        b = getattr(getattr(fitted, "partition", None), "b", None)
        return out, b

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one_method, enumerate(methods)))
    else:
        results = [one_method(x) for x in enumerate(methods)]

    base_mse = float(np.mean(results[0][0][:, 0] ** 2))
    base_se = float(np.mean(results[0][0][:, 1]))
    rows = []
    for method, (out, b) in zip(methods, results):
        mse, mse_se = _mean_and_se(out[:, 0] ** 2)
        mse_sd, se_se = _mean_and_se(out[:, 1])
        mb, mb_se = _mean_and_se(out[:, 0])
        rows.append(MethodRow(method.name, mse, mse_se, mse_sd, se_se, mb, mb_se,
                              mse / base_mse if base_mse > 0 else float("nan"),
                              mse_sd / base_se if base_se > 0 else float("nan"), n_reps, seed, b))
    meta = {"panel_fingerprint": panel.fingerprint(), **(metadata or {})}
    return SimulationReport(tuple(rows), n_reps, seed, label, meta)


def spec_metadata(spec: SyntheticDGPSpec) -> dict:
    return {"dgp": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(spec).items()}}
