"""The four list objectives (all minimized) and weighted-sum scalarization.

Objectives per candidate list: summed item popularity (long-tail pressure),
inverse summed predicted rating (accuracy pressure), absolute deviation from
the activity/age long-tail quota, and L1 distance between the list's genre
distribution and the age group's genre distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dataset import Item, PopularityPartition
from .profiles import item_genre_matrix


@dataclass(frozen=True)
class CandidateList:
    """A length-k recommendation list for one user (the chromosome)."""

    user_id: int
    items: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.items)

    def validate(self, rated_items: frozenset[int] | set[int]) -> None:
        """Raise if the list repeats items or recommends already-rated items."""
        if len(set(self.items)) != len(self.items):
            raise ValueError(f"duplicate items in candidate list for user {self.user_id}")
        clash = set(self.items) & set(rated_items)
        if clash:
            raise ValueError(
                f"candidate list for user {self.user_id} contains rated items {sorted(clash)}"
            )


@dataclass(frozen=True)
class ObjectiveVector:
    long_tail_participation: float
    accuracy_obj: float
    dynamic_quota: int
    genre_distance: float

    def as_array(self) -> np.ndarray:
        return np.array([
            self.long_tail_participation,
            self.accuracy_obj,
            float(self.dynamic_quota),
            self.genre_distance,
        ])


@dataclass(frozen=True)
class ObjectiveWeights:
    w1: float = 0.25  # long-tail participation
    w2: float = 0.25  # accuracy
    w3: float = 0.25  # dynamic quota
    w4: float = 0.25  # genre distance

    def __post_init__(self):
        arr = self.as_array()
        if (arr < 0).any():
            raise ValueError(f"weights must be non-negative, got {arr}")
        if abs(arr.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {arr.sum()}")

    def as_array(self) -> np.ndarray:
        return np.array([self.w1, self.w2, self.w3, self.w4])

    @classmethod
    def normalized(cls, values: Sequence[float]) -> "ObjectiveWeights":
        arr = np.asarray(values, dtype=float)
        if arr.shape != (4,) or (arr < 0).any() or arr.sum() <= 0:
            raise ValueError(f"need 4 non-negative weights with positive sum, got {values}")
        arr = arr / arr.sum()
        return cls(*arr.tolist())


@dataclass(frozen=True)
class PopulationStats:
    """Per-component min/max over a population of objective vectors."""

    mins: np.ndarray
    maxs: np.ndarray

    @classmethod
    def from_vectors(cls, vectors: Sequence[ObjectiveVector]) -> "PopulationStats":
        arr = np.stack([v.as_array() for v in vectors])
        return cls(mins=arr.min(axis=0), maxs=arr.max(axis=0))


def obj_long_tail_participation(candidate: CandidateList, partition: PopularityPartition) -> float:
    """Summed training popularity of the list items (Lower = more long tail)."""
    return float(sum(partition.popularity(i) for i in candidate.items))


def obj_accuracy(candidate: CandidateList, predictions: Mapping[int, float]) -> float:
    """Reciprocal of the summed predicted ratings; lower = stronger predictions."""
    total = sum(predictions[i] for i in candidate.items)
    return 1.0 / total


def obj_dynamic_quota(candidate: CandidateList, partition: PopularityPartition, target_count: int) -> int:
    """Absolute gap between the list's long-tail count and the activity/age target."""
    n_lt = sum(1 for i in candidate.items if partition.is_long_tail(i))
    return abs(n_lt - target_count)


def obj_genre_distance(
    candidate: CandidateList,
    items: Mapping[int, Item],
    pgu: np.ndarray,
) -> float:
    """L1 distance between the list's genre distribution and the age profile."""
    gmat = item_genre_matrix(items, list(candidate.items))
    incidences = gmat.sum(axis=0)
    pgl = incidences / incidences.sum()
    return float(np.abs(np.asarray(pgu) - pgl).sum())


def scalarize(
    vector: ObjectiveVector,
    population_stats: PopulationStats,
    weights: ObjectiveWeights,
) -> float:
    """Min-max normalize each component against the population and weight-sum.

    Components whose population min equals its max normalize to 0. Lower is
    better throughout.
    """
    v = vector.as_array()
    span = population_stats.maxs - population_stats.mins
    normalized = np.zeros(4)
    live = span > 0
    normalized[live] = (v[live] - population_stats.mins[live]) / span[live]
    return float(normalized @ weights.as_array())


class ObjectiveContext:
    """Vectorized objective evaluation over a fixed per-user candidate pool.

    Individuals are index arrays into the pool. Normalization bounds are the
    extremes attainable by any k-subset of the pool, so fitness comparisons
    stay consistent across an entire optimization run.
    """

    def __init__(
        self,
        user_id: int,
        pool_items: Sequence[int],
        k: int,
        partition: PopularityPartition,
        predictions: Mapping[int, float],
        items: Mapping[int, Item],
        pgu: np.ndarray,
        target_lt: int,
        weights: ObjectiveWeights,
    ):
        if len(set(pool_items)) != len(pool_items):
            raise ValueError("pool contains duplicate items")
        if len(pool_items) < k:
            raise ValueError(f"pool of {len(pool_items)} items cannot fill lists of length {k}")
        self.user_id = user_id
        self.k = k
        self.pool_items = np.asarray(pool_items, dtype=np.int64)
        self.pop_counts = np.array([partition.popularity(int(i)) for i in pool_items], dtype=float)
        self.preds = np.array([predictions[int(i)] for i in pool_items], dtype=float)
        self.is_lt = np.array([partition.is_long_tail(int(i)) for i in pool_items])
        self.genre_mat = item_genre_matrix(items, [int(i) for i in pool_items])
        self.pgu = np.asarray(pgu, dtype=float)
        self.target_lt = int(target_lt)
        self.weights = weights.as_array()

        pops_sorted = np.sort(self.pop_counts)
        preds_sorted = np.sort(self.preds)
        lo = np.array([
            pops_sorted[:k].sum(),
            1.0 / preds_sorted[-k:].sum(),
            0.0,
            0.0,
        ])
        hi = np.array([
            pops_sorted[-k:].sum(),
            1.0 / preds_sorted[:k].sum(),
            float(k),
            2.0,
        ])
        self.norm_lo = lo
        self.norm_span = np.where(hi - lo > 0, hi - lo, 1.0)

    def objectives(self, population: np.ndarray) -> np.ndarray:
        """Objective matrix (n, 4) for index-encoded individuals (n, k)."""
        pop = np.atleast_2d(population)
        lt_part = self.pop_counts[pop].sum(axis=1)
        acc = 1.0 / self.preds[pop].sum(axis=1)
        quota = np.abs(self.is_lt[pop].sum(axis=1) - self.target_lt).astype(float)
        genre_counts = self.genre_mat[pop].sum(axis=1)
        totals = genre_counts.sum(axis=1, keepdims=True)
        pgl = genre_counts / totals
        gd = np.abs(self.pgu[None, :] - pgl).sum(axis=1)
        return np.stack([lt_part, acc, quota, gd], axis=1)

    def fitness_from_objectives(self, objs: np.ndarray) -> np.ndarray:
        normalized = (objs - self.norm_lo) / self.norm_span
        return normalized @ self.weights

    def fitness(self, population: np.ndarray) -> np.ndarray:
        return self.fitness_from_objectives(self.objectives(population))

    def vector(self, individual: np.ndarray) -> ObjectiveVector:
        row = self.objectives(individual[None, :])[0]
        return ObjectiveVector(
            long_tail_participation=float(row[0]),
            accuracy_obj=float(row[1]),
            dynamic_quota=int(round(row[2])),
            genre_distance=float(row[3]),
        )

    def candidate(self, individual: np.ndarray) -> CandidateList:
        return CandidateList(
            user_id=self.user_id,
            items=tuple(int(i) for i in self.pool_items[individual]),
        )
