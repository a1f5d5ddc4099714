"""Age-conditioned genre distributions and long-tail-share-vs-activity curves.

These profiles parameterize the dynamic-preference objectives: the genre
distribution of an age group (``pgu``) anchors the genre-distance objective,
and the activity curves set how many long-tail items a list should carry for
a user at a given activity level.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dataset import AGE_GROUPS, GENRE_INDEX, GENRES, N_GENRES, Item, PopularityPartition, Rating, User


@dataclass(frozen=True)
class AgeGenreProfile:
    age_group: int
    pgu: np.ndarray  # (18,) genre-incidence fractions, sums to 1
    synthesized: bool = False  # True when the group had no ratings (uniform fallback)


@dataclass(frozen=True)
class ActivityBin:
    lo: int  # inclusive activity index range
    hi: int
    share: float  # long-tail share of ratings in the bin
    population: int


@dataclass(frozen=True)
class DynamicsCurve:
    age_group: int
    bins: tuple[ActivityBin, ...]
    synthesized: bool = False


def item_genre_matrix(items: Mapping[int, Item], item_ids: Sequence[int]) -> np.ndarray:
    """Genre indicator rows (n_items x 18) in the given item order."""
    mat = np.zeros((len(item_ids), N_GENRES))
    for row, item_id in enumerate(item_ids):
        for g in items[item_id].genres:
            mat[row, GENRE_INDEX[g]] = 1.0
    return mat


def build_age_genre_profiles(
    train: Sequence[Rating],
    users: Mapping[int, User],
    items: Mapping[int, Item],
) -> dict[int, AgeGenreProfile]:
    """Per age group, the normalized genre-incidence distribution of its ratings.

    A rating of a 3-genre movie contributes 3 incidences. Groups with zero
    ratings get the uniform vector, flagged as synthesized.
    """
    if not train:
        raise ValueError("training ratings required")
    age_idx = {g: i for i, g in enumerate(AGE_GROUPS)}
    item_ids = sorted(items)
    item_pos = {i: p for p, i in enumerate(item_ids)}
    gmat = item_genre_matrix(items, item_ids)

    rows = np.fromiter((age_idx[users[r.user_id].age_group] for r in train), dtype=np.int64, count=len(train))
    cols = np.fromiter((item_pos[r.item_id] for r in train), dtype=np.int64, count=len(train))
    counts = np.zeros((len(AGE_GROUPS), N_GENRES))
    np.add.at(counts, rows, gmat[cols])

    profiles: dict[int, AgeGenreProfile] = {}
    for g, age in enumerate(AGE_GROUPS):
        total = counts[g].sum()
        if total > 0:
            profiles[age] = AgeGenreProfile(age_group=age, pgu=counts[g] / total)
        else:
            profiles[age] = AgeGenreProfile(
                age_group=age, pgu=np.full(N_GENRES, 1.0 / N_GENRES), synthesized=True
            )
    return profiles


def activity_order(ratings: Sequence[Rating]) -> list[Rating]:
    """A user's ratings in activity order (timestamp, then item_id)."""
    return sorted(ratings, key=lambda r: (r.timestamp, r.item_id))


def build_dynamics_curves(
    train: Sequence[Rating],
    users: Mapping[int, User],
    partition: PopularityPartition,
    n_bins: int = 10,
) -> dict[int, DynamicsCurve]:
    """Long-tail share of ratings, binned by per-user activity index, per age group.

    Activity index is the 1-based position of a rating in its user's timeline.
    Bins are equal-population over the pooled indices of the age group (rating
    count distributions are heavy-tailed, so equal-width bins would starve the
    high-activity end). Groups with no ratings get flat 0.5 curves, flagged.
    """
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")

    by_user: dict[int, list[Rating]] = {}
    for r in train:
        by_user.setdefault(r.user_id, []).append(r)

    pooled: dict[int, list[tuple[int, bool]]] = {age: [] for age in AGE_GROUPS}
    for user_id, rows in by_user.items():
        age = users[user_id].age_group
        bucket = pooled[age]
        for idx, r in enumerate(activity_order(rows), start=1):
            bucket.append((idx, partition.is_long_tail(r.item_id)))

    curves: dict[int, DynamicsCurve] = {}
    for age in AGE_GROUPS:
        records = pooled[age]
        if not records:
            bins = tuple(
                ActivityBin(lo=b + 1, hi=b + 1, share=0.5, population=0)
                for b in range(n_bins)
            )
            curves[age] = DynamicsCurve(age_group=age, bins=bins, synthesized=True)
            continue
        acts = np.array(sorted(t for t, _ in records), dtype=np.int64)
        n = acts.size
        ranges: list[tuple[int, int]] = []
        prev_hi = 0
        for b in range(1, n_bins + 1):
            pos = min(n - 1, round(b * n / n_bins) - 1)
            hi = int(acts[pos]) if b < n_bins else int(acts[-1])
            if hi <= prev_hi:
                continue  # duplicate boundary: merge into the previous bin
            ranges.append((prev_hi + 1, hi))
            prev_hi = hi

        act_arr = np.array([t for t, _ in records], dtype=np.int64)
        lt_arr = np.array([lt for _, lt in records], dtype=bool)
        out_bins: list[ActivityBin] = []
        for lo, hi in ranges:
            mask = (act_arr >= lo) & (act_arr <= hi)
            population = int(mask.sum())
            share = float(lt_arr[mask].mean()) if population else 0.0
            out_bins.append(ActivityBin(lo=lo, hi=hi, share=share, population=population))
        curves[age] = DynamicsCurve(age_group=age, bins=tuple(out_bins))
    return curves


def target_long_tail_count(curve: DynamicsCurve, n_ratings_registered: int, k: int) -> int:
    """How many of the k list slots should hold long-tail items at this activity level."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    share = curve.bins[-1].share
    for b in curve.bins:
        if n_ratings_registered <= b.hi:
            share = b.share
            break
    target = math.floor(share * k + 0.5)
    return max(0, min(k, target))


def write_profiles_csv(profiles: Mapping[int, AgeGenreProfile], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["age_group", "genre", "pgu", "synthesized"])
        for age in sorted(profiles):
            p = profiles[age]
            for g, genre in enumerate(GENRES):
                w.writerow([age, genre, repr(float(p.pgu[g])), str(p.synthesized).lower()])


def write_curves_csv(curves: Mapping[int, DynamicsCurve], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["age_group", "bin_lo", "bin_hi", "share", "population", "synthesized"])
        for age in sorted(curves):
            c = curves[age]
            for b in c.bins:
                w.writerow([age, b.lo, b.hi, repr(b.share), b.population, str(c.synthesized).lower()])
