"""Monte-Carlo experiment runner: config, fan-out, sweeps and CSV output."""

from __future__ import annotations

import copy
import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import metrics
from .fog import FogConfig, FogInstance, generate_instance
from .geometry import BoxSet, SamplingScheme
from .solver import (
    MOSP,
    BanSaP,
    CloudOnly,
    ConstraintOracle,
    FogOnly,
    HyperParams,
    Problem,
    run,
    schedule,
    with_gamma,
)

log = logging.getLogger(__name__)

OUTPUT_ENV = "BANSAP_OUTPUT_DIR"
RAW_COLUMNS = ("algorithm", "seed", "t", "avg_cost", "cum_fit", "dual_norm")
SUMMARY_COLUMNS = ("algorithm", "axis", "axis_value", "metric", "mean", "std")
AXES = ("M", "scheme", "N")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class AlgorithmSpec:
    type: str  # bansap | mosp | cloud_only | fog_only
    name: Optional[str] = None
    M: int = 1
    scheme: str = "uniform"
    params: Optional[dict] = None  # explicit alpha, mu, delta[, gamma]
    schedule: Optional[dict] = None  # mode, c_alpha, c_mu, c_delta, rho

    def __post_init__(self):
        if self.type not in ("bansap", "mosp", "cloud_only", "fog_only"):
            raise ConfigError(f"unknown algorithm type {self.type!r}")
        self.scheme = SamplingScheme(self.scheme).value
        if self.M < 1:
            raise ConfigError(f"M must be >= 1 (algorithm {self.label})")
        if self.params is not None and self.schedule is not None:
            raise ConfigError(f"{self.label}: give either params or schedule, not both")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.type == "bansap":
            return f"bansap_m{self.M}_{self.scheme}"
        return self.type

    def algorithm(self):
        return {
            "bansap": lambda: BanSaP(self.M, SamplingScheme(self.scheme)),
            "mosp": MOSP,
            "cloud_only": CloudOnly,
            "fog_only": FogOnly,
        }[self.type]()

    def hyper(self, T: int, box: BoxSet) -> HyperParams:
        if self.type in ("cloud_only", "fog_only"):
            return HyperParams(alpha=1.0, mu=1.0, T=T)
        if self.schedule is not None:
            s = dict(self.schedule)
            mode = s.pop("mode", "two_point" if self.M >= 2 else "one_point")
            hp = schedule(max(T, 1), mode, box, M=self.M, scheme=self.scheme, **s)
            if self.type == "mosp":
                hp = HyperParams(alpha=hp.alpha, mu=hp.mu, T=hp.T)
            return replace(hp, T=T)
        p = dict(self.params or {})
        try:
            alpha = float(p.pop("alpha"))
        except KeyError as exc:
            raise ConfigError(f"{self.label}: params need alpha") from exc
        mu = float(p.pop("mu", alpha))
        if self.type == "mosp":
            return HyperParams(alpha=alpha, mu=mu, gamma=float(p.get("gamma", 0.0)), M=1, T=T)
        delta = float(p.pop("delta", 1.0))
        hp = HyperParams(alpha=alpha, mu=mu, delta=delta, gamma=min(delta / box.inner_radius, 0.999999),
                         M=self.M, scheme=self.scheme, T=T)
        if "gamma" in p:
            hp = with_gamma(hp, float(p["gamma"]), box)
        return hp


@dataclass
class SyntheticConfig:
    """Tracking problem on ``[-1, 1]^d``: ``f_t(x) = ||x - c_t||^2``, ``g_t(x) = a^T x - b_t``."""

    d: int = 2
    N: int = 1
    T: int = 200
    period: float = 50.0
    radius: float = 0.5


@dataclass
class ExperimentConfig:
    algorithms: list
    problem: str = "fog"
    fog: FogConfig = field(default_factory=FogConfig)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    T: int = 2000
    runs: int = 100
    base_seed: int = 0
    init: str = "center"
    compute_regret: bool = False
    optimum_tol: float = 1e-6
    workers: int = 1
    output_dir: str = "results"
    save_instances: bool = False

    def __post_init__(self):
        self.algorithms = [a if isinstance(a, AlgorithmSpec) else AlgorithmSpec(**a) for a in self.algorithms]
        if not self.algorithms:
            raise ConfigError("algorithm list is empty")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.T < 0:
            raise ConfigError("T must be >= 0")
        if self.problem not in ("fog", "synthetic"):
            raise ConfigError(f"unknown problem kind {self.problem!r}")
        if self.init not in ("center", "lower"):
            raise ConfigError(f"init must be 'center' or 'lower', got {self.init!r}")
        labels = [a.label for a in self.algorithms]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate algorithm labels: {labels}")
        if not isinstance(self.fog, FogConfig):
            self.fog = FogConfig(**self.fog)
        if not isinstance(self.synthetic, SyntheticConfig):
            self.synthetic = SyntheticConfig(**self.synthetic)
        self.fog.T = self.T
        self.synthetic.T = self.T
        if self.problem == "synthetic" and any(a.type in ("cloud_only", "fog_only") for a in self.algorithms):
            raise ConfigError("cloud_only/fog_only need the fog problem")

    def seeds(self) -> list:
        return [self.base_seed + i for i in range(self.runs)]

    def validate(self) -> None:
        """Build one instance and every algorithm's hyper-parameters; raises on any problem."""
        problem = build_problem(self, self.base_seed)
        for a in self.algorithms:
            hp = a.hyper(self.T, problem.box)
            if a.type == "bansap":
                hp.check_perturbation(problem.box)


def load_config(path) -> ExperimentConfig:
    data = yaml.safe_load(Path(path).read_text())
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return config_from_dict(data)


def config_from_dict(data: dict) -> ExperimentConfig:
    data = copy.deepcopy(data)
    exp = data.pop("experiment", {})
    prob = data.pop("problem", {"kind": "fog"})
    algos = data.pop("algorithms", [])
    if data:
        raise ConfigError(f"unknown top-level keys: {sorted(data)}")
    kw = dict(exp)
    kw["problem"] = prob.get("kind", "fog")
    if "fog" in prob:
        kw["fog"] = FogConfig(**prob["fog"])
    if "synthetic" in prob:
        kw["synthetic"] = SyntheticConfig(**prob["synthetic"])
    try:
        return ExperimentConfig(algorithms=algos, **kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# problems


def instance_seed(seed: int) -> np.random.SeedSequence:
    """Stream for instance draws of run ``seed`` (stream 0 of the run)."""
    return np.random.SeedSequence(seed, spawn_key=(0,))


def algorithm_seed(seed: int, index: int) -> np.random.SeedSequence:
    """Stream for the ``index``-th algorithm of run ``seed``."""
    return np.random.SeedSequence(seed, spawn_key=(1 + index,))


def synthetic_problem(cfg: SyntheticConfig, seed) -> Problem:
    rng = np.random.default_rng(seed)
    d, N = cfg.d, cfg.N
    box = BoxSet.cube(-1.0, 1.0, d)
    phase = rng.uniform(0, 2 * np.pi)
    A = rng.normal(size=(N, d))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    offsets = rng.uniform(0.1, 0.3, size=N)

    def target(t):
        c = np.zeros(d)
        c[0] = cfg.radius * math.cos(2 * math.pi * t / cfg.period + phase)
        if d > 1:
            c[1] = cfg.radius * math.sin(2 * math.pi * t / cfg.period + phase)
        return c

    def loss(t, x):
        r = x - target(t)
        return float(r @ r)

    def grad(t, x):
        return 2.0 * (x - target(t))

    def b(t):
        return offsets * (1.0 + 0.5 * math.sin(2 * math.pi * t / cfg.period))

    cons = ConstraintOracle(lambda t, x: A @ x - b(t), lambda t, x: A, linear=True)
    return Problem(box, loss, cons, gradient=grad, F=(2 + cfg.radius) ** 2 * d, G=2 * (1 + cfg.radius) * math.sqrt(d))


def build_problem(cfg: ExperimentConfig, seed) -> Problem:
    if cfg.problem == "fog":
        return generate_instance(cfg.fog, instance_seed(seed)).problem()
    return synthetic_problem(cfg.synthetic, instance_seed(seed))


# ---------------------------------------------------------------------------
# results


@dataclass
class RunResult:
    algorithm: str
    seed: int
    avg_cost: np.ndarray
    cum_fit: np.ndarray
    dual_norm: np.ndarray
    n_nodes: int
    regret: Optional[np.ndarray] = None
    error: Optional[str] = None

    @property
    def mean_cost(self) -> float:
        return float(np.mean(self.avg_cost)) if len(self.avg_cost) else float("nan")

    @property
    def fit(self) -> float:
        return float(self.cum_fit[-1]) if len(self.cum_fit) else 0.0


@dataclass
class ResultTable:
    runs: list  # RunResult, ordered by (algorithm order in config, seed)
    axis: str = ""
    axis_value: str = ""
    failures: list = field(default_factory=list)  # (algorithm, seed, message)

    def algorithms(self) -> list:
        seen = []
        for r in self.runs:
            if r.algorithm not in seen:
                seen.append(r.algorithm)
        return seen

    def by_algorithm(self, name: str) -> list:
        return [r for r in self.runs if r.algorithm == name]

    def summary(self) -> dict:
        """``{algorithm: {metric: (mean, std)}}`` over seeds (population std)."""
        out = {}
        for name in self.algorithms():
            rs = self.by_algorithm(name)
            stats = {
                "avg_cost": [r.mean_cost for r in rs],
                "fit": [r.fit for r in rs],
                "fit_per_node_slot": [r.fit / (r.n_nodes * max(len(r.cum_fit), 1)) for r in rs],
                "max_dual_norm": [float(np.max(r.dual_norm, initial=0.0)) for r in rs],
            }
            if all(r.regret is not None and len(r.regret) for r in rs):
                stats["dynamic_regret"] = [float(r.regret[-1]) for r in rs]
            out[name] = {k: (float(np.mean(v)), float(np.std(v))) for k, v in stats.items()}
        return out


def _run_one(cfg: ExperimentConfig, seed: int, index: int, problem: Problem, optima) -> RunResult:
    spec = cfg.algorithms[index]
    try:
        hp = spec.hyper(cfg.T, problem.box)
        traj = run(problem, spec.algorithm(), hp, algorithm_seed(seed, index), T=cfg.T, init=cfg.init)
    except Exception as exc:  # recorded, surfaced by the caller
        log.error("run failed: algorithm=%s seed=%s: %s", spec.label, seed, exc)
        empty = np.zeros(0)
        return RunResult(spec.label, seed, empty, empty, empty, 0, error=f"{type(exc).__name__}: {exc}")
    cum = metrics.cumulative_constraint(traj)
    fit = np.linalg.norm(np.maximum(cum, 0.0), axis=1) if len(cum) else np.zeros(0)
    regret = metrics.dynamic_regret(traj, optima, problem.loss) if optima is not None else None
    n_nodes = cum.shape[1] if cum.ndim == 2 and cum.shape[0] else 1
    return RunResult(
        spec.label,
        seed,
        np.array([r.avg_loss for r in traj.records]),
        fit,
        np.array([r.lambda_norm for r in traj.records]),
        n_nodes,
        regret,
    )


def _run_seed(cfg: ExperimentConfig, seed: int) -> list:
    problem = build_problem(cfg, seed)
    optima = None
    if cfg.compute_regret and cfg.T > 0:
        if problem.gradient is None:
            raise ConfigError("compute_regret needs the exact loss gradient")
        optima = metrics.optima_series(problem.loss, problem.gradient, problem.constraints, problem.box, cfg.T,
                                       cfg.optimum_tol)
    if cfg.save_instances and problem.fog is not None:
        out = Path(resolve_output_dir(cfg)) / "instances"
        out.mkdir(parents=True, exist_ok=True)
        problem.fog.save(out / f"seed_{seed}.json")
    return [_run_one(cfg, seed, i, problem, optima) for i in range(len(cfg.algorithms))]


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> ResultTable:
    """All algorithms on all seeds; one instance (and optima series) per seed."""
    workers = cfg.workers if workers is None else workers
    seeds = cfg.seeds()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_seed = list(pool.map(_run_seed, [cfg] * len(seeds), seeds))
    else:
        per_seed = [_run_seed(cfg, s) for s in seeds]
    runs = []
    for i in range(len(cfg.algorithms)):
        runs.extend(rs[i] for rs in per_seed)
    table = ResultTable([r for r in runs if r.error is None])
    table.failures = [(r.algorithm, r.seed, r.error) for r in runs if r.error is not None]
    return table


def clone_for(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    new = copy.deepcopy(cfg)
    if axis == "M":
        for a in new.algorithms:
            if a.type == "bansap":
                a.M = int(value)
    elif axis == "scheme":
        for a in new.algorithms:
            if a.type == "bansap":
                a.scheme = SamplingScheme(value).value
    elif axis == "N":
        if new.problem != "fog":
            raise ConfigError("axis N applies to the fog problem only")
        new.fog.N = int(value)
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    new.__post_init__()
    return new


def sweep(cfg: ExperimentConfig, axis: str, values) -> list:
    """One ``ResultTable`` per axis value, in the given order."""
    if axis not in AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    tables = []
    for v in values:
        t = run_experiment(clone_for(cfg, axis, v))
        t.axis, t.axis_value = axis, str(v)
        tables.append(t)
    return tables


# ---------------------------------------------------------------------------
# output


def resolve_output_dir(cfg: ExperimentConfig, override: Optional[str] = None) -> str:
    return override or os.environ.get(OUTPUT_ENV) or cfg.output_dir


def _fmt(x: float) -> str:
    return repr(float(x))


def raw_csv(table: ResultTable) -> str:
    """Per-slot rows with the fixed six-column header."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RAW_COLUMNS)
    for r in table.runs:
        for t in range(len(r.avg_cost)):
            w.writerow((r.algorithm, r.seed, t + 1, _fmt(r.avg_cost[t]), _fmt(r.cum_fit[t]), _fmt(r.dual_norm[t])))
    return buf.getvalue()


def summary_csv(tables) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for tab in tables:
        for alg, stats in tab.summary().items():
            for metric, (mean, std) in stats.items():
                w.writerow((alg, tab.axis, tab.axis_value, metric, _fmt(mean), _fmt(std)))
    return buf.getvalue()


PLOT_SCRIPT = r'''"""Render figures from the CSVs next to this script (matplotlib + pandas)."""
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

here = Path(__file__).resolve().parent
frames = []
for path in sorted(here.glob("**/raw.csv")):
    df = pd.read_csv(path)
    df["block"] = "" if path.parent == here else path.parent.name
    frames.append(df)
raw = pd.concat(frames, ignore_index=True)
summary = pd.read_csv(here / "summary.csv", keep_default_na=False)
group = ["block", "algorithm"]

for column, ylabel, fname in [("cum_fit", "dynamic fit", "fit_vs_time.png"),
                              ("avg_cost", "average cost", "cost_vs_time.png")]:
    fig, ax = plt.subplots(figsize=(6, 4))
    for key, df in raw.groupby(group):
        per_t = df.groupby("t")[column]
        if column == "avg_cost":
            # running time-average of the per-slot cost, mean +/- std over seeds
            df = df.sort_values(["seed", "t"]).copy()
            df["run_avg"] = df.groupby("seed")["avg_cost"].cumsum() / df["t"]
            per_t = df.groupby("t")["run_avg"]
        m, s = per_t.mean(), per_t.std(ddof=0)
        label = " ".join(k for k in key if k)
        ax.plot(m.index, m.values, label=label)
        ax.fill_between(m.index, (m - s).values, (m + s).values, alpha=0.2)
    ax.set_xlabel("slot t")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(here / fname, dpi=150)

swept = summary[summary["axis"] != ""].copy()
if len(swept):
    # drop the swept part of the label so one bar series spans all values
    pattern = {"M": r"_m\d+", "scheme": r"_(uniform|coordinate|gaussian)$"}.get(swept["axis"].iloc[0])
    if pattern:
        swept["algorithm"] = swept["algorithm"].str.replace(pattern, "", regex=True)
    order = list(dict.fromkeys(swept["axis_value"]))
    for metric, fname in [("fit_per_node_slot", "sweep_fit.png"), ("avg_cost", "sweep_cost.png")]:
        df = swept[swept["metric"] == metric].pivot(index="axis_value", columns="algorithm", values="mean")
        df = df.reindex(order)
        ax = df.plot.bar(figsize=(6, 4))
        ax.set_ylabel(metric)
        ax.set_xlabel(swept["axis"].iloc[0])
        ax.figure.tight_layout()
        ax.figure.savefig(here / fname, dpi=150)
'''


def emit_outputs(tables, out_dir) -> list:
    """Write raw CSV(s), ``summary.csv`` and ``plot.py`` into ``out_dir``.

    A single unswept table goes to ``out_dir/raw.csv``; sweep blocks go to
    ``out_dir/<axis>=<value>/raw.csv``. The summary is always combined.
    """
    if isinstance(tables, ResultTable):
        tables = [tables]
    if not tables or any(not t.runs for t in tables):
        raise ValueError("no successful runs to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for tab in tables:
        sub = out / f"{tab.axis}={tab.axis_value}" if tab.axis else out
        sub.mkdir(exist_ok=True)
        files.append(sub / "raw.csv")
        files[-1].write_text(raw_csv(tab))
    files += [out / "summary.csv", out / "plot.py"]
    files[-2].write_text(summary_csv(tables))
    files[-1].write_text(PLOT_SCRIPT)
    return files


def read_raw_csv(path) -> dict:
    """Parse a raw CSV into ``{(algorithm, seed): {column: array}}``."""
    rows = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["algorithm"], int(row["seed"]))
            d = rows.setdefault(key, {"avg_cost": [], "cum_fit": [], "dual_norm": []})
            for c in d:
                d[c].append(float(row[c]))
    return {k: {c: np.array(v) for c, v in d.items()} for k, d in rows.items()}


def replay(snapshot_path, cfg: ExperimentConfig, seed: int = 0) -> ResultTable:
    """Run the configured algorithms on a saved fog instance."""
    inst = FogInstance.load(snapshot_path)
    if cfg.T > inst.T:
        raise ConfigError(f"config horizon {cfg.T} exceeds snapshot horizon {inst.T}")
    problem = inst.problem()
    optima = None
    if cfg.compute_regret:
        optima = metrics.optima_series(problem.loss, problem.gradient, problem.constraints, problem.box, cfg.T,
                                       cfg.optimum_tol)
    runs = [_run_one(cfg, seed, i, problem, optima) for i in range(len(cfg.algorithms))]
    table = ResultTable([r for r in runs if r.error is None])
    table.failures = [(r.algorithm, r.seed, r.error) for r in runs if r.error is not None]
    return table
