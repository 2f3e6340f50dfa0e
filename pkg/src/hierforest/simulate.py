"""Monte Carlo comparison of the hierarchical and naive forests on synthetic data.

Three data-generating processes share the covariates ``x1, x2 ~ U(0, 1)`` and
``x3 = 0.4 x1 + 0.4 x2 + 0.2 u`` with ``u ~ U(0, 1)``; ``x3`` plays the role of
the protected attribute and ``(x1, x2)`` are its proxies.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import erfc

from ._rng import derive_seed, generator
from .dataset import Dataset
from .forest import ForestConfig, fit
from .hier import OOB, HierarchicalSpec, fit_hier
from .metrics import (ConfusionMatrix, RegressionReport, average_confusion, confusion, mse,
                      regression_report, replicate_average)
from .quantile import QuantileIndex
from . import svg

log = logging.getLogger(__name__)

LINEAR = "linear"
NONLINEAR = "nonlinear"
CLASSIFICATION = "classification"
SCENARIOS = (LINEAR, NONLINEAR, CLASSIFICATION)
POSITIVE, NEGATIVE = "P", "N"
ARMS = ("without_proxy", "with_proxy")


# candidate features per split = round(sqrt(p)): 2 of the 3 covariates, 1 of 2 proxies
STUDY_FOREST = ForestConfig(mtry_rule="round")


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str
    n: int = 500
    b: int = 100
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.n < 10:
            raise ValueError("n must be at least 10")
        if self.b < 1:
            raise ValueError("b must be at least 1")
        if not self.noise_sd > 0:
            raise ValueError("noise_sd must be positive")


@dataclass
class SimulatedData:
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    y: np.ndarray
    mu: np.ndarray | None = None

    def to_dataset(self, response="y", with_x3=True) -> Dataset:
        cols = {"x1": self.x1, "x2": self.x2}
        if with_x3:
            cols["x3"] = self.x3
        if self.y.dtype.kind in "OUS":
            cols["y"] = self.y
            return Dataset.from_columns(cols, response="y", levels={"y": (POSITIVE, NEGATIVE)})
        cols["y"] = self.y
        return Dataset.from_columns(cols, response=response)


def normal_cdf(z):
    """Standard normal CDF through the complementary error function."""
    return 0.5 * erfc(-np.asarray(z, dtype=np.float64) / np.sqrt(2.0))


def signal(scenario, x1, x2, x3):
    """Noise-free regression function (or success probability for classification)."""
    if scenario == LINEAR:
        return 3 * x1 + 3 * x2 + 2 * x3
    if scenario == NONLINEAR:
        return 100 * (x1 - 0.5) ** 2 * np.maximum(x2 - 0.25, 0.0) + np.cos(x3)
    if scenario == CLASSIFICATION:
        return normal_cdf(10 * (x1 - 1) + 10 * np.abs(x2 - 0.5) + 10 * x3)
    raise ValueError(f"unknown scenario {scenario!r}")


def sample_response(scenario, x1, x2, x3, rng, noise_sd=1.0):
    """Draw Y given the covariates: signal plus noise, or a Bernoulli label."""
    f = signal(scenario, x1, x2, x3)
    if scenario == CLASSIFICATION:
        return np.where(rng.random(np.shape(f)) < f, POSITIVE, NEGATIVE).astype(object), f
    return f + rng.normal(0.0, noise_sd, np.shape(f)), None


def draw(spec: ScenarioSpec, rng, n=None) -> SimulatedData:
    n = spec.n if n is None else n
    x1 = rng.random(n)
    x2 = rng.random(n)
    x3 = 0.4 * x1 + 0.4 * x2 + 0.2 * rng.random(n)
    y, mu = sample_response(spec.scenario, x1, x2, x3, rng, spec.noise_sd)
    return SimulatedData(x1, x2, x3, y, mu)


def generate(spec: ScenarioSpec, replicate: int) -> tuple[SimulatedData, SimulatedData]:
    """Independent train and test draws of size ``n`` for one replicate."""
    if not 0 <= replicate < spec.b:
        raise IndexError(f"replicate {replicate} outside 0..{spec.b - 1}")
    rng = generator(spec.seed, spec.scenario, replicate)
    return draw(spec, rng), draw(spec, rng)


@dataclass
class ArmResult:
    reports: list = field(default_factory=list)        # RegressionReport per replicate
    confusions: list = field(default_factory=list)     # ConfusionMatrix per replicate

    @property
    def average(self) -> RegressionReport | None:
        return replicate_average(self.reports) if self.reports else None

    @property
    def confusion_pct(self) -> np.ndarray | None:
        return average_confusion(self.confusions) if self.confusions else None


@dataclass
class StudyResult:
    spec: ScenarioSpec
    arms: dict
    protected_mse: list            # bottom-layer test MSE of x3 per replicate
    protected_var: list            # test variance of x3 per replicate
    oob_fallbacks: int
    plot: dict                     # replicate-0 test predictions for plotting


def run_replicate(spec: ScenarioSpec, replicate: int, naive_cfg: ForestConfig,
                  bottom_cfg: ForestConfig, top_cfg: ForestConfig, feed: str = OOB,
                  level: float = 0.9, threads: int = 1):
    train, test = generate(spec, replicate)
    rep_seed = derive_seed(spec.seed, spec.scenario, "fit", replicate)
    hspec = HierarchicalSpec(proxies=("x1", "x2"), protected="x3", outcome="y",
                             covariates=("x1", "x2"), bottom=bottom_cfg, top=top_cfg,
                             feed=feed, seed=rep_seed)
    _, top_seeded = hspec.layer_configs()
    # the naive arm shares the top layer's random stream: a paired comparison
    naive_cfg = replace(naive_cfg, seed=top_seeded.seed)

    train_ds = train.to_dataset()
    test_ds = test.to_dataset()
    naive = fit(train_ds, naive_cfg, threads=threads)
    hier = fit_hier(train_ds, hspec, threads=threads)

    x3_hat = hier.predict_protected(test_ds)
    test_top = hier.augment(test_ds, x3_hat)
    out = {"x3": test.x3, "x3_hat": x3_hat, "x1": test.x1,
           "protected_mse": mse(x3_hat, test.x3),
           "protected_var": float(np.var(test.x3)), "fallbacks": hier.oob_fallbacks}
    if spec.scenario == CLASSIFICATION:
        for arm, forest, rows in ((ARMS[0], naive, test_ds), (ARMS[1], hier.top, test_top)):
            frac = forest.vote_fractions(rows)
            pred = np.asarray(forest.classes, dtype=object)[frac.argmax(axis=1)]
            out[arm] = {"pred": pred, "p_positive": frac[:, forest.classes.index(POSITIVE)],
                        "confusion": confusion(pred, test.y, (POSITIVE, NEGATIVE))}
        out["y"] = test.y
        out["mu"] = test.mu
        return out
    for arm, forest, rows in ((ARMS[0], naive, test_ds), (ARMS[1], hier.top, test_top)):
        qi = QuantileIndex(forest)
        pred = forest.predict(rows)
        bounds = qi.bounds(rows, level)
        out[arm] = {"pred": pred, "bounds": bounds,
                    "report": regression_report(pred, test.y, bounds)}
    out["y"] = test.y
    return out


def run_study(spec: ScenarioSpec, naive_cfg: ForestConfig = STUDY_FOREST,
              bottom_cfg: ForestConfig = STUDY_FOREST, top_cfg: ForestConfig = STUDY_FOREST,
              feed: str = OOB, level: float = 0.9, threads: int = 1,
              replicates=None) -> StudyResult:
    """Fit both arms on every replicate and average their test-set accuracy.

    Each replicate's data and forests are keyed by its index, so any subset or
    ordering of ``replicates`` reproduces the same per-replicate numbers.
    """
    arms = {a: ArmResult() for a in ARMS}
    pmse, pvar, fallbacks, plot = [], [], 0, {}
    for r in (range(spec.b) if replicates is None else replicates):
        out = run_replicate(spec, r, naive_cfg, bottom_cfg, top_cfg, feed, level, threads)
        for a in ARMS:
            if spec.scenario == CLASSIFICATION:
                arms[a].confusions.append(out[a]["confusion"])
            else:
                arms[a].reports.append(out[a]["report"])
        pmse.append(out["protected_mse"])
        pvar.append(out["protected_var"])
        fallbacks += out["fallbacks"]
        if r == 0 or not plot:
            plot = out
        log.info("%s replicate %d done", spec.scenario, r)
    return StudyResult(spec, arms, pmse, pvar, fallbacks, plot)


def table_rows(res: StudyResult) -> list[dict]:
    """One row per arm: bias/sd/mse (regression) or confusion percentages."""
    rows = []
    for a in ARMS:
        row = {"scenario": res.spec.scenario, "arm": a}
        if res.spec.scenario == CLASSIFICATION:
            pct = res.arms[a].confusion_pct
            for i, p in enumerate((POSITIVE, NEGATIVE)):
                for j, q in enumerate((POSITIVE, NEGATIVE)):
                    row[f"pred_{p}_actual_{q}_pct"] = f"{pct[i, j]:.4f}"
        else:
            avg = res.arms[a].average
            row.update({"bias": f"{avg.bias:.6f}", "sd_over_n": f"{avg.sd:.6f}",
                        "sd_conventional": f"{avg.sd_conventional:.6f}",
                        "mse": f"{avg.mse:.6f}", "pi_coverage": f"{avg.pi_coverage:.6f}"})
        rows.append(row)
    return rows


def write_table(res: StudyResult, path) -> Path:
    rows = table_rows(res)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return Path(path)


def plot_predictions(res: StudyResult | None, out_dir) -> list[Path]:
    """Write test-set prediction SVGs for replicate 0 of a study.

    One file per arm (observed dots, prediction line and, for regression, the
    interval band) plus ``<scenario>_protected.svg`` for the bottom layer.
    """
    if res is None or not res.plot:
        log.warning("no simulation results to plot")
        return []
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    p, sc = res.plot, res.spec.scenario
    paths = []
    for a in ARMS:
        path = out_dir / f"{sc}_{a}.svg"
        if sc == CLASSIFICATION:
            order = np.argsort(p[a]["p_positive"], kind="mergesort")
            obs = (p["y"][order] == POSITIVE).astype(float)
            svg.prediction_plot(path, np.arange(len(order)), obs,
                                {"P(vote)": p[a]["p_positive"][order]},
                                title=f"{sc}: {a.replace('_', ' ')}",
                                xlabel="test points ordered by predicted P", ylabel="Y")
        else:
            order = np.argsort(p[a]["pred"], kind="mergesort")
            b = p[a]["bounds"][order]
            svg.prediction_plot(path, np.arange(len(order)), p["y"][order],
                                {"prediction": p[a]["pred"][order]}, band=(b[:, 0], b[:, 1]),
                                title=f"{sc}: {a.replace('_', ' ')}",
                                xlabel="test points ordered by prediction", ylabel="Y")
        paths.append(path)
    path = out_dir / f"{sc}_protected.svg"
    order = np.argsort(p["x3_hat"], kind="mergesort")
    svg.prediction_plot(path, np.arange(len(order)), p["x3"][order],
                        {"predicted x3": p["x3_hat"][order]},
                        title="prediction of protected class",
                        xlabel="test points ordered by prediction", ylabel="x3")
    paths.append(path)
    return paths
