"""Field-interview workflow: clustering, incident-reason and daily-count models.

Records follow a ten-column schema (see :data:`RECORD_COLUMNS`). Race is the
protected attribute: hierarchical ("hier") models only ever see its
prediction from proxy columns, naive models use it directly.

The real interview data cannot be shipped, so :func:`synth_generate` writes
records with the same schema and tunable proxy strength.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from ._rng import derive_seed, generator
from .dataset import CATEGORICAL, Dataset, DatasetError, SplitSpec, quarter_dummies, split_indices
from .forest import Forest, ForestConfig, fit
from .hier import HierarchicalModel, HierarchicalSpec, fit_hier, fit_naive
from .metrics import accuracy, regression_report
from .quantile import QuantileIndex
from .text_cluster import ClusterModel, assign, cluster_labels
from . import svg

log = logging.getLogger(__name__)

RECORD_COLUMNS = ("sex", "street", "district", "city", "date", "priors", "race",
                  "skin_complexion", "clothing", "incident_reason")
RACES = ("Black", "White", "Hispanic", "Asian", "Other")
RACE_MARGINAL = (0.45, 0.27, 0.18, 0.06, 0.04)
DISTRICTS = ("A1", "A7", "B2", "B3", "C6", "C11", "D4", "D14", "E5", "E13", "E18")
DISTRICT_WEIGHTS = (0.12, 0.06, 0.16, 0.12, 0.07, 0.14, 0.10, 0.06, 0.05, 0.06, 0.06)
DISTRICT_CITY = {"A1": "Boston", "A7": "East Boston", "B2": "Roxbury", "B3": "Mattapan",
                 "C6": "South Boston", "C11": "Dorchester", "D4": "South End",
                 "D14": "Brighton", "E5": "West Roxbury", "E13": "Jamaica Plain",
                 "E18": "Hyde Park"}
COMPLEXIONS = ("Light", "Medium", "Dark", "Olive", "Unknown")
# the complexion usually recorded for each race when the link is active
RACE_COMPLEXION = {"Black": "Dark", "White": "Light", "Hispanic": "Olive",
                   "Asian": "Light", "Other": "Medium"}
# each garment group has spelling variants that share one Soundex code
CLOTHING = (
    ("hoodie", "hoody", "hoodee", "hudie"),
    ("jacket", "jackett", "jakit", "jaccket"),
    ("coat", "coatt", "cot", "coate"),
    ("parka", "parkah", "parca", "parkka"),
    ("vest", "vesst", "vst", "veste"),
    ("uniform", "uniforme", "unifrom"),
    ("dress", "dres", "dresss", "drss"),
    ("blazer", "blaser", "blazzer"),
    ("khakis", "kakis", "khakiss", "kakhis"),
    ("leggings", "legings", "leggins", "legins"),
)
REASON_KEYWORDS = (
    ("Assault", "Battery", "A&B", "Fight", "Affray", "Threats"),
    ("Motor Vehicle", "Traffic", "Auto Law", "License", "Speeding", "Registration"),
    ("Larceny", "Theft", "Shoplifting", "Vandalism", "Burglary", "Robbery"),
    ("Drug", "Narcotics", "Alcohol", "OUI", "Possession", "Distribution"),
    ("Homicide", "Suicide", "Firearm", "Shooting", "Weapon", "Gun"),
    ("Harassment", "Protective Order", "Trespass", "Disorderly", "Warrant", "Investigate Person"),
)
REASON_QUALIFIERS = ("", " Suspect", " Investigation", " Report", " In Progress", " Arrest",
                     " Complaint", " Follow Up")


class PipelineError(ValueError):
    pass


def reason_vocabulary() -> list[list[str]]:
    """Free-text incident reasons per latent category (288 distinct strings)."""
    return [[k + q for k in kws for q in REASON_QUALIFIERS] for kws in REASON_KEYWORDS]


# synthetic data

@dataclass(frozen=True)
class SynthSpec:
    n: int = 20000
    seed: int = 0
    start: str = "2009-01-01"
    end: str = "2014-12-31"
    link: float = 0.9             # probability race follows its proxies
    race_effect: float = 0.6      # strength of race in the reason model
    seasonal_amplitude: float = 0.35

    def __post_init__(self):
        if self.n < 1:
            raise PipelineError("n must be positive")
        if not 0.0 <= self.link <= 1.0:
            raise PipelineError("link must lie in [0, 1]")
        if np.datetime64(self.end) < np.datetime64(self.start):
            raise PipelineError("end date precedes start date")


def _race_rule(district_idx, garment_idx):
    # fixed proxy -> race table: the district picks a majority race, and every
    # third garment group flips to the district's secondary race
    primary = np.array([0, 2, 0, 0, 1, 0, 1, 1, 1, 2, 0])
    secondary = np.array([1, 1, 2, 2, 0, 2, 0, 3, 0, 1, 2])
    flip = (garment_idx + district_idx) % 3 == 0
    return np.where(flip, secondary[district_idx], primary[district_idx])


def synth_generate(spec: SynthSpec) -> pd.DataFrame:
    """Synthetic interview records with the ten-column schema.

    With probability ``link`` a record's race is a fixed function of its
    district and garment group and its complexion follows its race; otherwise
    race is drawn from a fixed marginal and complexion uniformly, so at
    ``link=0`` the proxies carry no information about race. Daily volume
    follows an annual sinusoid with autocorrelated day effects.
    """
    rng = generator(spec.seed, "synth")
    days = np.arange(np.datetime64(spec.start), np.datetime64(spec.end) + 1)
    doy = (days - days.astype("datetime64[Y]")).astype(np.int64)
    season = 1.0 + spec.seasonal_amplitude * np.sin(2 * np.pi * (doy - 100) / 365.25)
    eps = rng.normal(0.0, 0.25, len(days))
    ar = np.empty(len(days))
    ar[0] = eps[0]
    for t in range(1, len(days)):
        ar[t] = 0.6 * ar[t - 1] + eps[t]
    weight = season * np.exp(ar)
    counts = rng.multinomial(spec.n, weight / weight.sum())
    date = np.repeat(days, counts)
    n = spec.n

    district_idx = rng.choice(len(DISTRICTS), size=n, p=np.array(DISTRICT_WEIGHTS) / sum(DISTRICT_WEIGHTS))
    garment_idx = rng.integers(0, len(CLOTHING), size=n)
    linked = rng.random(n) < spec.link
    race_idx = np.where(linked, _race_rule(district_idx, garment_idx),
                        rng.choice(len(RACES), size=n, p=RACE_MARGINAL))
    comp_linked = rng.random(n) < spec.link
    comp_of_race = np.array([COMPLEXIONS.index(RACE_COMPLEXION[r]) for r in RACES])
    comp_idx = np.where(comp_linked, comp_of_race[race_idx], rng.integers(0, len(COMPLEXIONS), size=n))

    quarter = quarter_dummies(date) @ np.array([1, 2, 3])
    g = generator(0, "reason-effects")
    base = g.normal(0.0, 0.5, 6)
    d_eff = g.normal(0.0, 0.8, (len(DISTRICTS), 6))
    r_eff = g.normal(0.0, 1.0, (len(RACES), 6)) * spec.race_effect
    q_eff = g.normal(0.0, 0.3, (4, 6))
    logits = base + d_eff[district_idx] + r_eff[race_idx] + q_eff[quarter]
    prob = np.exp(logits - logits.max(axis=1, keepdims=True))
    prob /= prob.sum(axis=1, keepdims=True)
    cat = (prob.cumsum(axis=1) > rng.random(n)[:, None]).argmax(axis=1)
    vocab = reason_vocabulary()
    reason = [vocab[c][rng.integers(0, len(vocab[c]))] for c in cat]
    clothing = [CLOTHING[k][rng.integers(0, len(CLOTHING[k]))] for k in garment_idx]

    city = np.array([DISTRICT_CITY[DISTRICTS[d]] for d in district_idx], dtype=object)
    city[rng.random(n) < 0.1] = "Boston"
    street_no = rng.integers(1, 40, size=n)
    street = [f"{DISTRICTS[d]} Street {s}" for d, s in zip(district_idx, street_no)]
    return pd.DataFrame({
        "sex": np.where(rng.random(n) < 0.85, "M", "F"),
        "street": street,
        "district": np.array(DISTRICTS)[district_idx],
        "city": city,
        "date": date.astype(str),
        "priors": rng.poisson(1.5, size=n),
        "race": np.array(RACES)[race_idx],
        "skin_complexion": np.array(COMPLEXIONS)[comp_idx],
        "clothing": clothing,
        "incident_reason": reason,
    }, columns=list(RECORD_COLUMNS))


def write_records(records: pd.DataFrame, path) -> None:
    records.to_csv(path, index=False, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)


def read_records(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in RECORD_COLUMNS if c not in df.columns]
    if missing:
        raise DatasetError(f"records file lacks columns {missing}")
    df = df[list(RECORD_COLUMNS)]
    if (df == "").any().any():
        bad = int(np.flatnonzero((df == "").any(axis=1).to_numpy())[0]) + 1
        raise DatasetError(f"row {bad}: missing value")
    try:
        df["priors"] = df["priors"].astype(float)
    except ValueError as exc:
        raise DatasetError(f"priors must be numeric: {exc}") from None
    return df


# preprocessing

@dataclass(frozen=True)
class PipelineConfig:
    reason_k: int | None = 6
    clothing_k: int | None = 10
    k_max: int = 12
    protected: str = "race"
    proxies: tuple = ("district", "city", "skin_complexion", "clothing_cluster")
    covariates: tuple = ("sex", "district", "city", "priors", "skin_complexion",
                         "clothing_cluster", "q2", "q3", "q4")
    n_trees: int = 100
    min_node_size_class: int = 10
    min_node_size_reg: int = 5
    train_fraction: float = 0.8
    cutoff: str = "2014-01-01"
    level: float = 0.9
    district: str | None = None      # occurrence model for one district only
    feed: str = "oob"

    def __post_init__(self):
        object.__setattr__(self, "proxies", tuple(self.proxies))
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if not self.proxies:
            raise PipelineError("the proxy column set is empty")
        if self.protected in self.covariates:
            raise PipelineError("the protected column may not be a top covariate")


@dataclass
class Preprocessed:
    dataset: Dataset
    reason_model: ClusterModel
    clothing_model: ClusterModel
    reason_cluster: np.ndarray       # per record, "R1".."Rk"
    clothing_cluster: np.ndarray     # per record, "C1".."Ck"
    dates: np.ndarray


def preprocess(records: pd.DataFrame, cfg: PipelineConfig = PipelineConfig()) -> Preprocessed:
    """Cluster reasons and clothing, derive quarter dummies, build a Dataset.

    The response is the reason cluster. Race stays in the table (it is the
    protected column, used only as a bottom-layer target and by naive models).
    Street is dropped.
    """
    if len(records) == 0:
        raise PipelineError("no records")
    reason_m = cluster_labels(records["incident_reason"], k=cfg.reason_k, k_max=cfg.k_max)
    cloth_m = cluster_labels(records["clothing"], k=cfg.clothing_k, k_max=cfg.k_max)
    reason = np.array([f"R{reason_m.assignment[r]}" for r in records["incident_reason"]], dtype=object)
    cloth = np.array([f"C{cloth_m.assignment[c]}" for c in records["clothing"]], dtype=object)
    dates = np.array(records["date"], dtype="datetime64[D]")
    q = quarter_dummies(dates)
    cols = {
        "sex": records["sex"].astype(str).to_numpy(dtype=object),
        "district": records["district"].astype(str).to_numpy(dtype=object),
        "city": records["city"].astype(str).to_numpy(dtype=object),
        "priors": records["priors"].to_numpy(dtype=float),
        "race": records["race"].astype(str).to_numpy(dtype=object),
        "skin_complexion": records["skin_complexion"].astype(str).to_numpy(dtype=object),
        "clothing_cluster": cloth,
        "q2": q[:, 0].astype(float), "q3": q[:, 1].astype(float), "q4": q[:, 2].astype(float),
        "date": dates,
        "reason_cluster": reason,
    }
    levels = {"reason_cluster": [f"R{i}" for i in range(1, reason_m.k + 1)],
              "clothing_cluster": [f"C{i}" for i in range(1, cloth_m.k + 1)],
              "race": sorted(set(cols["race"]), key=lambda r: (RACES.index(r) if r in RACES else 99, r))}
    ds = Dataset.from_columns(cols, response="reason_cluster", levels=levels)
    return Preprocessed(ds, reason_m, cloth_m, reason, cloth, dates)


# incident-reason model

def _cls_cfg(cfg: PipelineConfig, seed) -> ForestConfig:
    return ForestConfig(n_trees=cfg.n_trees, min_node_size=cfg.min_node_size_class, seed=seed)


def fit_reason_model(ds: Dataset, mode: str, cfg: PipelineConfig = PipelineConfig(), seed: int = 0,
                     threads: int = 1):
    """Hier: race from proxies, then reason from non-race covariates + predicted race.

    Naive: one forest on the same covariates plus raw race. Both arms share
    the top layer's random stream.
    """
    spec = HierarchicalSpec(proxies=cfg.proxies, protected=cfg.protected, outcome=ds.response,
                            covariates=cfg.covariates, bottom=_cls_cfg(cfg, 0),
                            top=_cls_cfg(cfg, 0), feed=cfg.feed, seed=seed)
    if mode == "hier":
        return fit_hier(ds, spec, threads=threads)
    if mode == "naive":
        _, top = spec.layer_configs()
        return fit_naive(ds, ds.response, cfg.covariates + (cfg.protected,), top, threads=threads)
    raise PipelineError(f"unknown mode {mode!r}")


def predict_model(model, rows):
    return model.predict(rows)


@dataclass
class ReasonResult:
    hier: HierarchicalModel
    naive: Forest
    accuracy: dict                 # arm -> test accuracy
    n_test: dict                   # arm -> number of test rows
    race_accuracy: float           # bottom layer on the test rows
    majority_race_rate: float
    test_index: np.ndarray


def reason_experiment(pre: Preprocessed, cfg: PipelineConfig = PipelineConfig(), seed: int = 0,
                      threads: int = 1) -> ReasonResult:
    """Random train/test split, both arms fitted on the same rows and scored on the same rows."""
    ds = pre.dataset
    tr, te = split_indices(ds, SplitSpec.random(cfg.train_fraction, derive_seed(seed, "split")))
    train, test = ds.take(tr), ds.take(te)
    hier = fit_reason_model(train, "hier", cfg, seed, threads)
    naive = fit_reason_model(train, "naive", cfg, seed, threads)
    truth = test.labels(ds.response)
    acc = {"hier": accuracy(hier.predict(test), truth), "naive": accuracy(naive.predict(test), truth)}
    race_true = test.labels(cfg.protected)
    race_acc = accuracy(hier.predict_protected(test), race_true)
    _, counts = np.unique(race_true.astype(str), return_counts=True)
    return ReasonResult(hier, naive, acc, {"hier": test.n, "naive": test.n}, race_acc,
                        float(counts.max() / counts.sum()), te)


# daily occurrence panel

def _prop_block(dates, values, levels, prefix, days):
    df = pd.DataFrame({"date": dates, "v": pd.Categorical(values, categories=list(levels))})
    tab = pd.crosstab(df["date"], df["v"], dropna=False).reindex(index=days, fill_value=0)
    tab = tab.reindex(columns=list(levels), fill_value=0)
    total = tab.sum(axis=1).to_numpy(dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        props = np.where(total[:, None] > 0, tab.to_numpy(dtype=float) / total[:, None], 0.0)
    return pd.DataFrame(props, index=days, columns=[f"{prefix}_{l}" for l in levels])


def build_daily_panel(records: pd.DataFrame, reason_clusters, race_predictions=None,
                      reason_levels=None, race_levels=RACES, district_levels=DISTRICTS) -> pd.DataFrame:
    """One row per calendar day between the first and last record.

    Columns: ``count``, ``empty_day`` flag, occurrence-proportion families
    ``reason_*``, ``race_*`` (observed), ``predrace_*`` (predicted, when
    given) and ``district_*``, quarter dummies ``q2..q4``, and ``lag1_*``
    copies of all of these shifted by one day (NaN on the first day).
    """
    if len(records) == 0:
        raise PipelineError("no records to aggregate")
    dates = np.array(records["date"], dtype="datetime64[D]")
    days = pd.DatetimeIndex(np.arange(dates.min(), dates.max() + 1), name="date")
    dts = pd.DatetimeIndex(dates)
    reason_clusters = np.asarray(reason_clusters, dtype=object)
    if reason_levels is None:
        reason_levels = sorted(set(reason_clusters), key=lambda s: (len(s), s))
    count = pd.Series(1, index=dts).groupby(level=0).sum().reindex(days, fill_value=0)
    blocks = [pd.DataFrame({"count": count.to_numpy(dtype=float),
                            "empty_day": (count.to_numpy() == 0).astype(float)}, index=days),
              _prop_block(dts, reason_clusters, reason_levels, "reason", days),
              _prop_block(dts, records["race"].to_numpy(), race_levels, "race", days)]
    if race_predictions is not None:
        blocks.append(_prop_block(dts, np.asarray(race_predictions, dtype=object), race_levels,
                                  "predrace", days))
    blocks.append(_prop_block(dts, records["district"].to_numpy(), district_levels, "district", days))
    q = quarter_dummies(days.to_numpy().astype("datetime64[D]"))
    blocks.append(pd.DataFrame(q.astype(float), index=days, columns=["q2", "q3", "q4"]))
    panel = pd.concat(blocks, axis=1)
    lagged = panel.shift(1)
    lagged.columns = [f"lag1_{c}" for c in panel.columns]
    return pd.concat([panel, lagged], axis=1)


def occurrence_features(panel: pd.DataFrame, mode: str) -> list[str]:
    """Lag-1 count and proportions plus same-day quarter dummies."""
    if mode not in ("hier", "naive"):
        raise PipelineError(f"unknown mode {mode!r}")
    race_prefix = "lag1_predrace_" if mode == "hier" else "lag1_race_"
    if mode == "hier" and not any(c.startswith(race_prefix) for c in panel.columns):
        raise PipelineError("hier occurrence model needs predicted-race proportions")
    keep = ["lag1_count"]
    keep += [c for c in panel.columns if c.startswith(("lag1_reason_", race_prefix, "lag1_district_"))]
    return keep + ["q2", "q3", "q4"]


@dataclass
class OccurrenceResult:
    mode: str
    forest: Forest
    features: list
    train_dates: pd.DatetimeIndex
    test_dates: pd.DatetimeIndex
    truth: np.ndarray
    prediction: np.ndarray
    bounds: np.ndarray
    report: object


def fit_occurrence_model(panel: pd.DataFrame, mode: str, cfg: PipelineConfig = PipelineConfig(),
                         seed: int = 0, threads: int = 1) -> OccurrenceResult:
    """Forest forecast of day-t counts from day t-1 covariates, split at ``cfg.cutoff``.

    Training uses days strictly before the cutoff, testing the days on or
    after it; the first panel day has no lag and is skipped.
    """
    if len(panel) < 2:
        raise PipelineError("the daily panel needs at least two days")
    feats = occurrence_features(panel, mode)
    usable = panel.iloc[1:]
    cutoff = pd.Timestamp(cfg.cutoff)
    train = usable[usable.index < cutoff]
    test = usable[usable.index >= cutoff]
    if len(train) < 2 or len(test) == 0:
        raise PipelineError(f"cutoff {cfg.cutoff} leaves {len(train)} training / {len(test)} test days")
    data = {c: train[c].to_numpy(dtype=float) for c in feats}
    data["count"] = train["count"].to_numpy(dtype=float)
    ds = Dataset.from_columns(data, response="count")
    fcfg = ForestConfig(n_trees=cfg.n_trees, min_node_size=cfg.min_node_size_reg,
                        seed=derive_seed(seed, "occurrence"))
    forest = fit(ds, fcfg, threads=threads)
    rows = {c: test[c].to_numpy(dtype=float) for c in feats}
    pred = forest.predict(rows)
    bounds = QuantileIndex(forest).bounds(rows, cfg.level)
    truth = test["count"].to_numpy(dtype=float)
    return OccurrenceResult(mode, forest, feats, train.index, test.index, truth, pred, bounds,
                            regression_report(pred, truth, bounds))


def occurrence_experiment(records: pd.DataFrame, pre: Preprocessed, reason: ReasonResult,
                          cfg: PipelineConfig = PipelineConfig(), seed: int = 0, threads: int = 1):
    """Both occurrence arms on the same panel; race is predicted by the hier bottom layer."""
    race_pred = reason.hier.predict_protected(pre.dataset)
    recs, rc, rp = records, pre.reason_cluster, race_pred
    if cfg.district is not None:
        mask = (records["district"] == cfg.district).to_numpy()
        if not mask.any():
            raise PipelineError(f"no records for district {cfg.district!r}")
        recs, rc, rp = records[mask], rc[mask], rp[mask]
    levels = [f"R{i}" for i in range(1, pre.reason_model.k + 1)]
    race_levels = pre.dataset.column_schema("race").levels
    panel = build_daily_panel(recs, rc, rp, levels, race_levels)
    return panel, {m: fit_occurrence_model(panel, m, cfg, seed, threads) for m in ("hier", "naive")}


def audit_unawareness(models, protected="race") -> int:
    """Number of tree nodes, over all given forests/models, splitting on raw race.

    Raw race means the protected column itself or its observed daily
    proportions (``race_*`` / ``lag1_race_*``).
    """
    forests = []
    for m in models:
        if isinstance(m, HierarchicalModel):
            forests += [m.bottom, m.top]
        else:
            forests.append(m)
    bad = 0
    for f in forests:
        names = np.array(f.feature_names + [""], dtype=object)
        used = names[f.feature[f.feature >= 0]]
        bad += sum(1 for u in used if u == protected or u.startswith((f"{protected}_", f"lag1_{protected}_")))
    return bad


def write_forecast(results: dict, path) -> None:
    h, nv = results["hier"], results["naive"]
    if not h.test_dates.equals(nv.test_dates):
        raise PipelineError("arms were evaluated on different days")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "truth", "pred_hier", "lower_hier", "upper_hier",
                    "pred_naive", "lower_naive", "upper_naive"])
        for i, d in enumerate(h.test_dates):
            w.writerow([d.strftime("%Y-%m-%d"), f"{h.truth[i]:.0f}",
                        f"{h.prediction[i]:.6f}", f"{h.bounds[i, 0]:.6f}", f"{h.bounds[i, 1]:.6f}",
                        f"{nv.prediction[i]:.6f}", f"{nv.bounds[i, 0]:.6f}", f"{nv.bounds[i, 1]:.6f}"])


def plot_forecast(results: dict, path) -> None:
    h, nv = results["hier"], results["naive"]
    x = np.arange(len(h.test_dates))
    svg.prediction_plot(path, x, h.truth, {"with proxy": h.prediction, "without proxy": nv.prediction},
                        band=(h.bounds[:, 0], h.bounds[:, 1]),
                        title=f"daily occurrence from {h.test_dates[0].date()}",
                        xlabel="day", ylabel="interviews per day")
