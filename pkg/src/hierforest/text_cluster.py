"""Phonetic string clustering for free-text categories.

Labels are encoded word by word with American Soundex, compared with the
Jaro-Winkler similarity, grouped by agglomerative clustering and cut at a
cluster count picked by the elbow of the within-cluster medoid cost.
"""

from __future__ import annotations

import csv
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SOUNDEX_JW = "soundex-jw"
RAW_JW = "raw-jw"
MODES = (SOUNDEX_JW, RAW_JW)
LINKAGES = ("average", "complete", "single")

_SOUNDEX_DIGIT = {c: d for d, group in (("1", "bfpv"), ("2", "cgjkqsxz"), ("3", "dt"),
                                        ("4", "l"), ("5", "mn"), ("6", "r")) for c in group}
_WORD = re.compile(r"[^\W_]+", re.UNICODE)


class ClusterError(ValueError):
    pass


class SoundexCode(str):
    """A four-character Soundex code; ``flagged`` marks input with no letters."""

    flagged: bool

    def __new__(cls, code, flagged=False):
        obj = super().__new__(cls, code)
        obj.flagged = flagged
        return obj


def _ascii_letters(s):
    s = unicodedata.normalize("NFKD", s)
    return [c for c in s.lower() if "a" <= c <= "z"]


def soundex(s: str) -> SoundexCode:
    """American Soundex: first letter plus three digits, e.g. Robert -> R163.

    Letters h and w do not separate two consonants with the same digit;
    vowels (and y) do. Non-letters are ignored. Input without any letter
    returns ``"Z000"`` with ``flagged`` set.
    """
    letters = _ascii_letters(s)
    if not letters:
        return SoundexCode("Z000", flagged=True)
    digits = []
    prev = _SOUNDEX_DIGIT.get(letters[0])
    for c in letters[1:]:
        d = _SOUNDEX_DIGIT.get(c)
        if d is None:
            if c not in "hw":
                prev = None
            continue
        if d != prev:
            digits.append(d)
        prev = d
    return SoundexCode((letters[0].upper() + "".join(digits) + "000")[:4])


def jaro(a: str, b: str) -> float:
    if a == b:
        return 1.0
    la, lb = len(a), len(b)
    if la == 0 or lb == 0:
        return 0.0
    window = max(max(la, lb) // 2 - 1, 0)
    a_hit = [False] * la
    b_hit = [False] * lb
    m = 0
    for i, ch in enumerate(a):
        for j in range(max(0, i - window), min(i + window + 1, lb)):
            if not b_hit[j] and b[j] == ch:
                a_hit[i] = b_hit[j] = True
                m += 1
                break
    if m == 0:
        return 0.0
    half, k = 0, 0
    for i in range(la):
        if a_hit[i]:
            while not b_hit[k]:
                k += 1
            if a[i] != b[k]:
                half += 1
            k += 1
    t = half / 2
    return (m / la + m / lb + (m - t) / m) / 3


def jaro_winkler(a: str, b: str, prefix_scale: float = 0.1, max_prefix: int = 4) -> float:
    """Jaro similarity boosted by the common prefix (at most ``max_prefix`` chars)."""
    if not 0.0 <= prefix_scale <= 0.25:
        raise ValueError("prefix_scale must lie in [0, 0.25]")
    sim = jaro(a, b)
    ell = 0
    for x, y in zip(a[:max_prefix], b[:max_prefix]):
        if x != y:
            break
        ell += 1
    return sim + ell * prefix_scale * (1.0 - sim)


def representation(label: str, mode: str = SOUNDEX_JW) -> str:
    """String actually compared: per-word Soundex codes, or the lower-cased label."""
    if mode == RAW_JW:
        return label.lower()
    if mode != SOUNDEX_JW:
        raise ClusterError(f"unknown distance mode {mode!r}")
    codes = [soundex(w) for w in _WORD.findall(label)]
    kept = [c for c in codes if not c.flagged]
    return " ".join(kept) if kept else "Z000"


def label_distance(a: str, b: str, mode: str = SOUNDEX_JW, prefix_scale: float = 0.1) -> float:
    return 1.0 - jaro_winkler(representation(a, mode), representation(b, mode), prefix_scale)


@dataclass(frozen=True)
class DistanceMatrix:
    labels: tuple
    d: np.ndarray
    mode: str = SOUNDEX_JW

    @property
    def n(self):
        return len(self.labels)


def distance_matrix(labels, mode: str = SOUNDEX_JW, prefix_scale: float = 0.1) -> DistanceMatrix:
    labels = tuple(str(l) for l in labels)
    if len(set(labels)) != len(labels):
        raise ClusterError("labels must be unique")
    reps = [representation(l, mode) for l in labels]
    uniq = list(dict.fromkeys(reps))
    where = {r: i for i, r in enumerate(uniq)}
    du = np.zeros((len(uniq), len(uniq)))
    for i in range(len(uniq)):
        for j in range(i + 1, len(uniq)):
            du[i, j] = du[j, i] = 1.0 - jaro_winkler(uniq[i], uniq[j], prefix_scale)
    idx = np.array([where[r] for r in reps], dtype=np.int64)
    d = du[np.ix_(idx, idx)]
    np.clip(d, 0.0, 1.0, out=d)
    np.fill_diagonal(d, 0.0)
    d.setflags(write=False)
    return DistanceMatrix(labels, d, mode)


@dataclass(frozen=True)
class MergeTree:
    """Agglomeration history in scipy's convention.

    ``merges[k] = (a, b)`` joins clusters ``a`` and ``b`` (leaves are
    ``0..n-1``, the cluster formed at step ``k`` is ``n + k``) at height
    ``heights[k]``; ``sizes[k]`` is the size of the new cluster.
    """

    merges: np.ndarray
    heights: np.ndarray
    sizes: np.ndarray
    n: int
    linkage: str

    def cut(self, k: int) -> np.ndarray:
        """Cluster ids 1..k per leaf, numbered by each cluster's smallest leaf."""
        if not 1 <= k <= self.n:
            raise ClusterError(f"k must lie in 1..{self.n}")
        parent = list(range(2 * self.n - 1))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for step in range(self.n - k):
            a, b = self.merges[step]
            parent[find(int(a))] = self.n + step
            parent[find(int(b))] = self.n + step
        roots = [find(i) for i in range(self.n)]
        ids = {}
        for r in roots:
            ids.setdefault(r, len(ids) + 1)
        return np.array([ids[r] for r in roots], dtype=np.int64)


def agglomerate(d: DistanceMatrix | np.ndarray, linkage: str = "average") -> MergeTree:
    """Agglomerative clustering with Lance-Williams updates.

    At each step the closest pair of active clusters merges; exact ties go to
    the pair with the smallest (first, second) slot indices, where a cluster's
    slot is its smallest leaf index.
    """
    D = np.array(d.d if isinstance(d, DistanceMatrix) else d, dtype=np.float64)
    n = D.shape[0]
    if n < 2:
        raise ClusterError("need at least two items to cluster")
    if linkage not in LINKAGES:
        raise ClusterError(f"unknown linkage {linkage!r}")
    work = D.copy()
    work[np.tril_indices(n)] = np.inf
    size = np.ones(n, dtype=np.int64)
    cid = np.arange(n)
    merges = np.empty((n - 1, 2), dtype=np.int64)
    heights = np.empty(n - 1)
    sizes = np.empty(n - 1, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    for step in range(n - 1):
        flat = int(np.argmin(work))
        i, j = divmod(flat, n)
        h = work[i, j]
        merges[step] = (cid[i], cid[j])
        heights[step] = h
        # distances from the merged cluster (in slot i) to every other slot
        di = np.where(np.arange(n) < i, work[:, i], work[i, :])
        dj = np.where(np.arange(n) < j, work[:, j], work[j, :])
        if linkage == "average":
            new = (size[i] * di + size[j] * dj) / (size[i] + size[j])
        elif linkage == "complete":
            new = np.maximum(di, dj)
        else:
            new = np.minimum(di, dj)
        active[j] = False
        size[i] += size[j]
        sizes[step] = size[i]
        cid[i] = n + step
        work[j, :] = np.inf
        work[:, j] = np.inf
        others = np.flatnonzero(active)
        others = others[others != i]
        lo = others[others < i]
        hi = others[others > i]
        work[lo, i] = new[lo]
        work[i, hi] = new[hi]
    return MergeTree(merges, heights, sizes, n, linkage)


def medoid_cost(d: np.ndarray, members: np.ndarray) -> tuple[int, float]:
    """(medoid, cost): the member minimising its summed distance to the others."""
    sub = d[np.ix_(members, members)]
    tot = sub.sum(axis=1)
    k = int(np.argmin(tot))
    return int(members[k]), float(tot[k])


def within_cost(d: np.ndarray, assignment: np.ndarray) -> float:
    return sum(medoid_cost(d, np.flatnonzero(assignment == c))[1]
               for c in range(1, assignment.max() + 1))


def elbow_k(tree: MergeTree, d: DistanceMatrix | np.ndarray, k_max: int) -> tuple[int, np.ndarray]:
    """Pick k at the largest second difference of the medoid-cost curve.

    Returns ``(k, curve)`` with ``curve[k - 1] = W(k)`` for ``k = 1..k_max``.
    """
    D = d.d if isinstance(d, DistanceMatrix) else np.asarray(d)
    if k_max < 3:
        raise ClusterError("k_max must be at least 3")
    k_max = min(k_max, tree.n)
    if k_max < 3:
        raise ClusterError("need at least 3 items for the elbow rule")
    curve = np.array([within_cost(D, tree.cut(k)) for k in range(1, k_max + 1)])
    second = curve[:-2] - 2 * curve[1:-1] + curve[2:]
    return int(np.argmax(second)) + 2, curve


@dataclass
class ClusterModel:
    labels: tuple
    k: int
    assignment: dict
    medoids: tuple          # medoids[c - 1] is the medoid label of cluster c
    tree: MergeTree
    mode: str = SOUNDEX_JW
    curve: np.ndarray | None = None

    def cluster_of(self, label: str) -> int:
        return assign(self, label)

    def write_assignments(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "cluster", "medoid"])
            for l in self.labels:
                c = self.assignment[l]
                w.writerow([l, c, self.medoids[c - 1]])

    def write_curve(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "within_cost"])
            if self.curve is not None:
                for k, v in enumerate(self.curve, start=1):
                    w.writerow([k, f"{v:.10g}"])

    def write_dendrogram(self, path, title="Dendrogram") -> None:
        from .svg import dendrogram
        cut = None
        if 1 < self.k <= self.tree.n:
            lo = self.tree.heights[self.tree.n - self.k - 1]
            hi = self.tree.heights[self.tree.n - self.k] if self.k > 1 else lo
            cut = (lo + hi) / 2
        dendrogram(path, self.tree.merges, self.tree.heights, self.labels, title, cut)


def cluster_labels(labels, k: int | None = None, k_max: int = 10, mode: str = SOUNDEX_JW,
                   linkage: str = "average") -> ClusterModel:
    """Cluster unique labels; ``k=None`` chooses k by the elbow rule.

    A forced ``k`` larger than the number of labels is capped at that number.
    """
    labels = tuple(dict.fromkeys(str(l) for l in labels))
    if len(labels) == 1:
        tree = MergeTree(np.empty((0, 2), np.int64), np.empty(0), np.empty(0, np.int64), 1, linkage)
        return ClusterModel(labels, 1, {labels[0]: 1}, labels, tree, mode, np.zeros(1))
    dm = distance_matrix(labels, mode)
    tree = agglomerate(dm, linkage)
    curve = None
    if k is None:
        k, curve = elbow_k(tree, dm, k_max)
    else:
        if k < 1:
            raise ClusterError("k must be positive")
        k = min(k, len(labels))
        if len(labels) >= 3:
            curve = np.array([within_cost(dm.d, tree.cut(j))
                              for j in range(1, min(max(k_max, k), len(labels)) + 1)])
    ids = tree.cut(k)
    medoids = tuple(labels[medoid_cost(dm.d, np.flatnonzero(ids == c))[0]] for c in range(1, k + 1))
    return ClusterModel(labels, k, dict(zip(labels, ids.tolist())), medoids, tree, mode, curve)


def assign(model: ClusterModel, label: str) -> int:
    """Cluster id of ``label``: its own cluster if seen, else the nearest medoid."""
    label = str(label)
    if label in model.assignment:
        return model.assignment[label]
    dist = [label_distance(label, m, model.mode) for m in model.medoids]
    return int(np.argmin(dist)) + 1


def read_labels(path, column: str | None = None) -> list[str]:
    """Unique labels from a CSV (first column unless ``column`` is named)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ClusterError("label file is empty")
    header, body = rows[0], rows[1:]
    j = header.index(column) if column else 0
    return list(dict.fromkeys(r[j] for r in body if r and r[j] != ""))
