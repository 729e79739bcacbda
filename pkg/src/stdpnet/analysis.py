"""Representational analyses of C2 features: RDMs, centroid clustering,
mutual-information feature selection and class-overlap tables."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .classify import ACTIVITY_FRACTION, activity_thresholds, binarize
from .errors import InvalidInputError
from .features import FeatureMatrix


def pearson_dissimilarity(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``1 - Pearson`` between all rows of ``x``.

    Rows with zero variance correlate 0 with everything (dissimilarity 1)
    and are reported in the returned boolean mask. The diagonal is 0.
    """
    x = np.asarray(x, dtype=np.float64)
    centred = x - x.mean(axis=1, keepdims=True)
    norm = np.sqrt(np.einsum("ij,ij->i", centred, centred))
    flat = norm == 0
    unit = np.divide(centred, norm[:, None], out=np.zeros_like(centred), where=~flat[:, None])
    corr = np.clip(unit @ unit.T, -1.0, 1.0)
    d = 1.0 - corr
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0.0)
    return d, flat


@dataclass
class Rdm:
    """Dissimilarity matrix with rows sorted by (class, instance).

    ``rows`` maps each matrix row back to its row in the source features.
    """

    matrix: np.ndarray
    rows: list[int]
    labels: list[str]
    instances: list[str]
    flat_rows: list[int] = field(default_factory=list)

    def class_boundaries(self) -> list[tuple[str, int, int]]:
        """``(class, first, last + 1)`` spans along the ordered rows."""
        out = []
        for i, lab in enumerate(self.labels):
            if out and out[-1][0] == lab:
                out[-1] = (lab, out[-1][1], i + 1)
            else:
                out.append((lab, i, i + 1))
        return out

    def mean_dissimilarities(self) -> tuple[float, float]:
        """Mean (within-class, between-class) off-diagonal dissimilarity."""
        lab = np.array(self.labels)
        same = lab[:, None] == lab[None, :]
        off = ~np.eye(len(lab), dtype=bool)
        within = self.matrix[same & off]
        between = self.matrix[~same]
        return (float(within.mean()) if within.size else float("nan"),
                float(between.mean()) if between.size else float("nan"))


def rdm(features: FeatureMatrix, view=None) -> Rdm:
    """RDM over all rows, or over the rows whose ``view`` metadata equals ``view``."""
    idx = [i for i in range(features.n_rows) if view is None or str(features.meta[i].get("view")) == str(view)]
    if len(idx) < 2:
        raise InvalidInputError(f"an RDM needs at least 2 rows, got {len(idx)}")
    idx.sort(key=lambda i: (features.labels[i], str(features.meta[i].get("instance", "")), i))
    d, flat = pearson_dissimilarity(features.values[idx])
    return Rdm(d, idx, [features.labels[i] for i in idx],
               [str(features.meta[i].get("instance", "")) for i in idx],
               [idx[k] for k in np.flatnonzero(flat)])


def rdms_by_view(features: FeatureMatrix) -> dict[str, Rdm]:
    """One RDM per distinct view tag with at least two rows."""
    views = sorted({str(m.get("view")) for m in features.meta if m.get("view") not in (None, "")})
    out = {}
    for v in views:
        if sum(str(m.get("view")) == v for m in features.meta) >= 2:
            out[v] = rdm(features, view=v)
    return out


# -- hierarchical clustering ---------------------------------------------------------------


@dataclass
class Merge:
    left: int
    right: int
    node: int
    distance: float
    size: int


@dataclass
class Dendrogram:
    """Binary merge tree. Leaves are ``0..n-1``; merge ``k`` creates node ``n + k``.

    Heights are the centroid dissimilarities at merge time and need not be
    monotone.
    """

    n_leaves: int
    merges: list[Merge]
    labels: list[str]

    def members(self, node: int) -> list[int]:
        if node < self.n_leaves:
            return [node]
        m = self.merges[node - self.n_leaves]
        return sorted(self.members(m.left) + self.members(m.right))

    def annotate(self, node: int) -> dict:
        """Majority label with its count ``H`` and the cluster size ``C``; label ties go to the smallest."""
        counts = Counter(self.labels[i] for i in self.members(node))
        best = max(counts.values())
        label = min(lab for lab, c in counts.items() if c == best)
        return {"node": node, "label": label, "H": best, "C": sum(counts.values())}

    def cut(self, k: int) -> list[int]:
        """Node ids of the ``k`` clusters left after the first ``n - k`` merges."""
        if not 1 <= k <= self.n_leaves:
            raise InvalidInputError(f"k must be in [1, {self.n_leaves}]")
        alive = set(range(self.n_leaves))
        for m in self.merges[: self.n_leaves - k]:
            alive -= {m.left, m.right}
            alive.add(m.node)
        return sorted(alive)

    def to_dict(self) -> dict:
        return {
            "n_leaves": self.n_leaves,
            "labels": list(self.labels),
            "merges": [
                {"left": m.left, "right": m.right, "node": m.node, "distance": m.distance, "size": m.size,
                 **{k: v for k, v in self.annotate(m.node).items() if k != "node"}}
                for m in self.merges
            ],
        }


def _centroid_distances(c: np.ndarray, others: np.ndarray) -> np.ndarray:
    d, _ = pearson_dissimilarity(np.vstack([c[None], others]))
    return d[0, 1:]


def hierarchical_cluster(features, labels: Sequence[str] | None = None) -> Dendrogram:
    """Agglomerative centroid linkage under ``1 - Pearson``.

    Each step merges the globally closest pair of cluster centroids (mean
    of member rows); equal distances go to the pair with the smallest ids.
    """
    if isinstance(features, FeatureMatrix):
        x, labels = features.values, features.labels if labels is None else labels
    else:
        x = np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise InvalidInputError("clustering needs at least 2 rows")
    labels = [str(v) for v in labels] if labels is not None else [""] * n
    total = 2 * n - 1
    sums = np.zeros((total, x.shape[1]))
    sums[:n] = x
    sizes = np.zeros(total, dtype=np.int64)
    sizes[:n] = 1
    dist = np.full((total, total), np.inf)
    d0, _ = pearson_dissimilarity(x)
    dist[:n, :n] = np.where(np.triu(np.ones((n, n), dtype=bool), 1), d0, np.inf)
    alive = np.zeros(total, dtype=bool)
    alive[:n] = True
    merges = []
    for step in range(n - 1):
        # row-major argmin over the strict upper triangle = smallest (i, j) among ties
        flat = int(np.argmin(dist))
        i, j = divmod(flat, total)
        node = n + step
        merges.append(Merge(i, j, node, float(dist[i, j]), int(sizes[i] + sizes[j])))
        alive[[i, j]] = False
        dist[[i, j], :] = np.inf
        dist[:, [i, j]] = np.inf
        sums[node] = sums[i] + sums[j]
        sizes[node] = sizes[i] + sizes[j]
        others = np.flatnonzero(alive)
        if others.size:
            centroids = sums[others] / sizes[others, None]
            dist[others, node] = _centroid_distances(sums[node] / sizes[node], centroids)
        alive[node] = True
    return Dendrogram(n, merges, labels)


# -- mutual information ---------------------------------------------------------------------


def binary_mutual_information(active: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Plug-in MI in bits between each binary column and a binary target, add-one smoothed cells."""
    a = np.asarray(active, dtype=bool)
    t = np.asarray(target, dtype=bool)
    counts = np.empty((a.shape[1], 2, 2))
    for fx in (0, 1):
        for ty in (0, 1):
            counts[:, fx, ty] = np.sum((a == fx) & (t == ty)[:, None], axis=0) + 1.0
    p = counts / counts.sum(axis=(1, 2), keepdims=True)
    px = p.sum(axis=2, keepdims=True)
    py = p.sum(axis=1, keepdims=True)
    return np.sum(p * np.log2(p / (px * py)), axis=(1, 2))


def mi_select(features, labels: Sequence[str] | None, target_class: str, k: int = 50,
              fraction: float = ACTIVITY_FRACTION) -> list[int]:
    """Indices of the ``k`` features most informative about ``target_class`` versus the rest.

    Features are binarized as in the simple classifier. Indices come in
    rank order (highest MI first); equal MI ranks the lower index first.
    """
    if isinstance(features, FeatureMatrix):
        x, labels = features.values, features.labels if labels is None else labels
    else:
        x = np.asarray(features, dtype=np.float64)
    if k < 1 or k > x.shape[1]:
        raise InvalidInputError(f"k must be in [1, {x.shape[1]}], got {k}")
    target = np.array([str(v) == str(target_class) for v in labels])
    if target.all() or not target.any():
        raise InvalidInputError(f"class {target_class!r} and its complement must both be nonempty")
    mi = binary_mutual_information(binarize(x, activity_thresholds(x, fraction)), target)
    order = np.lexsort((np.arange(mi.size), -mi))
    return order[:k].tolist()


@dataclass
class OverlapTable:
    classes: list[str]
    counts: np.ndarray


def feature_overlap(selected: Mapping[str, Sequence[int]]) -> OverlapTable:
    """Number of shared selected features for every pair of classes."""
    classes = list(selected)
    sets = [set(int(i) for i in selected[c]) for c in classes]
    sizes = {len(s) for s in sets}
    if len(sizes) > 1:
        raise InvalidInputError(f"all selected sets must have the same size, got {sorted(sizes)}")
    counts = np.array([[len(a & b) for b in sets] for a in sets], dtype=np.int64)
    return OverlapTable(classes, counts)
