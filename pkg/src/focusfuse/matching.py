"""Nearest-neighbor descriptor matching with ratio test and
Laplacian-sign pre-filter, plus match-quality statistics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import Descriptor, KeyPoint

DEFAULT_RATIO_THRESHOLD = 0.8

_BLOCK = 1024  # sensed rows per distance-matrix block


@dataclass(frozen=True)
class Match:
    """One accepted sensed-to-reference correspondence."""

    sensed: KeyPoint
    reference: KeyPoint
    sensed_index: int
    reference_index: int
    distance: float
    ratio: float


@dataclass(frozen=True)
class MatchStats:
    """Voting statistics: pairs considered vs. pairs in the winning cell."""

    a_num: int
    v_num: int

    @property
    def accuracy(self) -> float:
        return self.v_num / self.a_num

    def __post_init__(self):
        if self.a_num < 1 or not 0 <= self.v_num <= self.a_num:
            raise ValueError(f"bad match stats: {self.v_num}/{self.a_num}")


def _sort_key(m: Match):
    # permutation-invariant deterministic order
    kp_s, kp_r = m.sensed, m.reference
    return (m.distance, kp_s.y, kp_s.x, kp_s.scale, kp_r.y, kp_r.x, kp_r.scale)


def match_descriptors(
    sensed: list[Descriptor],
    reference: list[Descriptor],
    ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
) -> list[Match]:
    """Match each sensed descriptor to its nearest reference neighbor.

    Candidates are restricted to reference keypoints with the same
    Laplacian sign; a pair survives only if the Euclidean distance to the
    closest candidate is at most ``ratio_threshold`` times the distance
    to the second-closest. Descriptors with fewer than two same-sign
    candidates yield no match. Equal-distance ties go to the lowest
    reference index; a second-closest distance of exactly zero (duplicate
    reference descriptors identical to the query) is treated as
    hopelessly ambiguous and rejected. Output is sorted by ascending
    distance.
    """
    if not sensed or not reference:
        raise ValueError("descriptor lists must be non-empty")
    if any(not d.valid for d in sensed) or any(not d.valid for d in reference):
        raise ValueError("invalid (all-zero) descriptors must be excluded before matching")

    ref_vals = np.stack([d.values for d in reference])
    sen_vals = np.stack([d.values for d in sensed])
    ref_signs = np.array([d.keypoint.laplacian_sign for d in reference], dtype=bool)
    sen_signs = np.array([d.keypoint.laplacian_sign for d in sensed], dtype=bool)
    ref_sq = np.einsum("ij,ij->i", ref_vals, ref_vals)
    sen_sq = np.einsum("ij,ij->i", sen_vals, sen_vals)

    matches: list[Match] = []
    for sign in (False, True):
        rcand = np.nonzero(ref_signs == sign)[0]  # ascending: ties pick lowest
        scand = np.nonzero(sen_signs == sign)[0]
        if rcand.size < 2 or scand.size == 0:
            continue
        rmat = ref_vals[rcand]
        rsq = ref_sq[rcand]

        for start in range(0, scand.size, _BLOCK):
            sidx = scand[start : start + _BLOCK]
            smat = sen_vals[sidx]
            d2 = smat @ rmat.T
            d2 *= -2.0
            d2 += rsq[None, :]
            d2 += sen_sq[sidx][:, None]
            np.maximum(d2, 0.0, out=d2)

            rows = np.arange(sidx.size)
            best = d2.min(axis=1)
            i1 = np.argmax(d2 == best[:, None], axis=1)
            d2[rows, i1] = np.inf
            second = d2.min(axis=1)
            i2 = np.argmax(d2 == second[:, None], axis=1)

            r1 = rcand[i1]
            r2 = rcand[i2]
            # exact distances for the selected pair only
            diff = smat - ref_vals[r1]
            dist1 = np.sqrt(np.einsum("ij,ij->i", diff, diff))
            diff = smat - ref_vals[r2]
            dist2 = np.sqrt(np.einsum("ij,ij->i", diff, diff))

            ok = dist2 > 0.0
            ratio = np.ones_like(dist1)
            np.divide(dist1, dist2, out=ratio, where=ok)
            ok &= ratio <= ratio_threshold
            for j in np.nonzero(ok)[0]:
                si = int(sidx[j])
                ri = int(r1[j])
                matches.append(
                    Match(
                        sensed=sensed[si].keypoint,
                        reference=reference[ri].keypoint,
                        sensed_index=si,
                        reference_index=ri,
                        distance=float(dist1[j]),
                        ratio=float(ratio[j]),
                    )
                )

    matches.sort(key=_sort_key)
    return matches


def top_k(matches: list[Match], k: int) -> list[Match]:
    """The k smallest-distance matches (all of them if fewer exist)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return sorted(matches, key=_sort_key)[:k]


def write_matches_csv(path: str | Path, matches: list[Match]) -> None:
    """Dump matches as CSV with columns xs, ys, xr, yr, distance, ratio."""
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["xs", "ys", "xr", "yr", "distance", "ratio"])
        for m in matches:
            writer.writerow(
                [m.sensed.x, m.sensed.y, m.reference.x, m.reference.y, m.distance, m.ratio]
            )
