"""Spatial weights over counties and global Moran's I with permutation
significance.

Queen contiguity is detected through shared polygon vertices after
quantizing coordinates to 1e-7 degrees; k-nearest-centroid weights use
great-circle distance. Rows are standardized to sum to one; isolates keep an
empty row and are flagged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse

from .errors import ContractError, DegenerateInputError
from .ingest import CountyIndex

_QUANTUM = 1e-7


@dataclass
class SpatialWeights:
    ids: list[str]
    neighbors: list[list[int]]
    weights: list[list[float]]   # row-standardized, aligned with neighbors
    scheme: str

    @property
    def n(self) -> int:
        return len(self.ids)

    def isolates(self) -> list[int]:
        return [i for i, nb in enumerate(self.neighbors) if not nb]


def _haversine(a: tuple[float, float], b: tuple[float, float]) -> float:
    lon1, lat1, lon2, lat2 = map(math.radians, (a[0], a[1], b[0], b[1]))
    h = (math.sin((lat2 - lat1) / 2) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2)
    return 2 * math.asin(min(1.0, math.sqrt(h)))


def _row_standardize(neighbors: list[list[int]]) -> list[list[float]]:
    return [[1.0 / len(nb)] * len(nb) if nb else [] for nb in neighbors]


def build_weights(counties: CountyIndex, scheme: str = "queen", k: int = 5,
                  isolate_fallback_k: int | None = 5) -> SpatialWeights:
    """Build row-standardized weights under queen contiguity or k-nearest
    centroids. Under queen, isolates optionally fall back to their
    ``isolate_fallback_k`` nearest centroids (one-directional)."""
    ids = [c.fips for c in counties.counties]
    n = len(ids)
    if n < 2:
        raise ContractError("need at least 2 counties for spatial weights")
    centroids = [c.centroid for c in counties.counties]

    if scheme == "queen":
        vertex_owner: dict[tuple[int, int], set[int]] = {}
        for i, county in enumerate(counties.counties):
            for polygon in county.polygons:
                for ring in polygon:
                    for lon, lat in ring:
                        key = (round(lon / _QUANTUM), round(lat / _QUANTUM))
                        vertex_owner.setdefault(key, set()).add(i)
        neighbor_sets: list[set[int]] = [set() for _ in range(n)]
        for owners in vertex_owner.values():
            if len(owners) > 1:
                for i in owners:
                    neighbor_sets[i] |= owners - {i}
        neighbors = [sorted(s) for s in neighbor_sets]
        if isolate_fallback_k:
            for i in range(n):
                if not neighbors[i]:
                    neighbors[i] = _knearest(i, centroids, isolate_fallback_k)
        scheme_name = "queen"
    elif scheme == "knn":
        if k < 1 or k >= n:
            raise ContractError(f"knn k={k} must be in [1, n-1]")
        neighbors = [_knearest(i, centroids, k) for i in range(n)]
        scheme_name = f"knn{k}"
    else:
        raise ContractError(f"unknown weights scheme {scheme!r}")

    return SpatialWeights(ids=ids, neighbors=neighbors,
                          weights=_row_standardize(neighbors),
                          scheme=scheme_name)


def _knearest(i: int, centroids: Sequence[tuple[float, float]], k: int) -> list[int]:
    dists = sorted((_haversine(centroids[i], centroids[j]), j)
                   for j in range(len(centroids)) if j != i)
    return sorted(j for _, j in dists[:min(k, len(dists))])


def lattice_weights(nrows: int, ncols: int, rook: bool = True) -> SpatialWeights:
    """Regular-grid weights (row-major ids "r,c"); rook or queen adjacency.
    Used for calibration tests and sensitivity checks."""
    n = nrows * ncols
    if n < 2:
        raise ContractError("lattice needs at least 2 cells")
    offsets = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if not rook:
        offsets += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    ids = [f"{r},{c}" for r in range(nrows) for c in range(ncols)]
    neighbors = []
    for r in range(nrows):
        for c in range(ncols):
            nb = [rr * ncols + cc for dr, dc in offsets
                  if 0 <= (rr := r + dr) < nrows and 0 <= (cc := c + dc) < ncols]
            neighbors.append(sorted(nb))
    return SpatialWeights(ids=ids, neighbors=neighbors,
                          weights=_row_standardize(neighbors),
                          scheme="rook-lattice" if rook else "queen-lattice")


# ---------------------------------------------------------------------------
# Moran's I


@dataclass
class MoranResult:
    I: float
    expected_I: float
    p_value: float
    n_used: int
    n_islands_dropped: int
    n_perm: int
    seed: int
    alternative: str
    analytic_p: float | None = None

    def to_dict(self) -> dict:
        d = {"I": self.I, "expected_I": self.expected_I,
             "p_value": self.p_value, "n_used": self.n_used,
             "n_islands_dropped": self.n_islands_dropped,
             "n_perm": self.n_perm, "seed": self.seed,
             "alternative": self.alternative}
        if self.analytic_p is not None:
            d["analytic_p"] = self.analytic_p
        return d


def _subset_weights(values: Mapping[str, float], weights: SpatialWeights):
    """Restrict to units that have a value and >=1 valued neighbor, then
    re-standardize rows. Returns (ids, value array, sparse W, dropped count)."""
    has_value = [i for i, f in enumerate(weights.ids) if f in values]
    value_set = set(has_value)
    kept = [i for i in has_value
            if any(j in value_set for j in weights.neighbors[i])]
    dropped = len(has_value) - len(kept)
    remap = {old: new for new, old in enumerate(kept)}
    rows, cols, data = [], [], []
    for old in kept:
        nbrs = [j for j in weights.neighbors[old] if j in remap]
        w = 1.0 / len(nbrs)
        for j in nbrs:
            rows.append(remap[old])
            cols.append(remap[j])
            data.append(w)
    m = len(kept)
    W = scipy.sparse.csr_matrix((data, (rows, cols)), shape=(m, m))
    ids = [weights.ids[i] for i in kept]
    x = np.array([values[f] for f in ids], dtype=float)
    return ids, x, W, dropped


def _moran_stat(z: np.ndarray, W: scipy.sparse.csr_matrix) -> float:
    # row-standardized: sum of all weights equals the number of units,
    # so I reduces to the normalized lag product
    denom = float(z @ z)
    w_sum = float(W.sum())
    n = len(z)
    return (n / w_sum) * float(z @ (W @ z)) / denom


def morans_i(values: Mapping[str, float], weights: SpatialWeights,
             n_perm: int = 999, seed: int = 0,
             alternative: str = "two-sided",
             analytic_check: bool = False) -> MoranResult:
    """Global Moran's I with a seeded permutation p-value.

    The p-value uses the +1 correction: (1 + #extreme) / (n_perm + 1),
    with extremeness measured around E[I] = -1/(n-1). Each permutation k
    draws its shuffle from an rng seeded by (seed, k), so results do not
    depend on execution schedule.
    """
    if n_perm < 99:
        raise ContractError("n_perm must be >= 99")
    if alternative not in ("two-sided", "greater", "less"):
        raise ContractError(f"unknown alternative {alternative!r}")
    _, x, W, dropped = _subset_weights(values, weights)
    n = len(x)
    if n < 2:
        raise ContractError("need >= 2 non-isolate units with values")
    z = x - x.mean()
    if float(z @ z) == 0.0:
        raise DegenerateInputError("all values identical; Moran's I undefined")
    i_obs = _moran_stat(z, W)
    e_i = -1.0 / (n - 1)

    extreme = 0
    for k in range(n_perm):
        rng = np.random.default_rng([seed, k])
        zp = z[rng.permutation(n)]
        i_k = _moran_stat(zp, W)
        if alternative == "two-sided":
            hit = abs(i_k - e_i) >= abs(i_obs - e_i)
        elif alternative == "greater":
            hit = i_k >= i_obs
        else:
            hit = i_k <= i_obs
        extreme += hit
    p = (1 + extreme) / (n_perm + 1)

    analytic_p = _moran_analytic_p(z, W, i_obs, e_i, alternative) \
        if analytic_check else None
    return MoranResult(I=i_obs, expected_I=e_i, p_value=p, n_used=n,
                       n_islands_dropped=dropped, n_perm=n_perm, seed=seed,
                       alternative=alternative, analytic_p=analytic_p)


def _moran_analytic_p(z, W, i_obs, e_i, alternative) -> float:
    """Normal approximation under the randomization assumption (cross-check)."""
    from .stats import betainc_regularized  # noqa: F401  (keep deps local)
    import math as _math

    n = len(z)
    Wd = W.toarray()
    w_sum = Wd.sum()
    s1 = 0.5 * ((Wd + Wd.T) ** 2).sum()
    s2 = ((Wd.sum(axis=0) + Wd.sum(axis=1)) ** 2).sum()
    m2 = (z ** 2).sum() / n
    m4 = (z ** 4).sum() / n
    b2 = m4 / (m2 ** 2)
    num = (n * ((n * n - 3 * n + 3) * s1 - n * s2 + 3 * w_sum ** 2)
           - b2 * ((n * n - n) * s1 - 2 * n * s2 + 6 * w_sum ** 2))
    den = (n - 1) * (n - 2) * (n - 3) * w_sum ** 2
    var = num / den - e_i ** 2
    if var <= 0:
        return 1.0
    zscore = (i_obs - e_i) / _math.sqrt(var)
    phi = 0.5 * _math.erfc(abs(zscore) / _math.sqrt(2))
    if alternative == "two-sided":
        return 2 * phi
    if alternative == "greater":
        return 0.5 * _math.erfc(zscore / _math.sqrt(2))
    return 0.5 * _math.erfc(-zscore / _math.sqrt(2))


def moran_scatter(values: Mapping[str, float], weights: SpatialWeights
                  ) -> list[tuple[str, float, float]]:
    """(id, z, spatial lag of z) triples for external scatterplot tools."""
    ids, x, W, _ = _subset_weights(values, weights)
    z = x - x.mean()
    lag = W @ z
    return [(f, float(z[i]), float(lag[i])) for i, f in enumerate(ids)]
