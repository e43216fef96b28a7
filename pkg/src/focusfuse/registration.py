"""Reference selection, translation estimation by Hough-grid voting, and
stack alignment.

Each matched pair casts a displacement vote d = (x_r - x_s, y_r - y_s)
into a grid cell of side ``cell_size``; the members of the most-voted
cell are the inliers and the model is their componentwise median (l1,
default) or mean (l2). Translating a sensed image by the rounded model
lands it in the reference frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .imgcore import Image, ValidityMask, translate
from .matching import Match, MatchStats

DEFAULT_CELL_SIZE = 4.0


class RegistrationError(RuntimeError):
    """Raised when a sensed image cannot be registered (no matches)."""


@dataclass(frozen=True)
class VoteGrid:
    """Sparse displacement-space accumulator; one vote per match."""

    cell_size: float
    votes: dict[tuple[int, int], list[Match]] = field(default_factory=dict)

    def cast(self, match: Match) -> None:
        dx = match.reference.x - match.sensed.x
        dy = match.reference.y - match.sensed.y
        cell = (math.floor(dx / self.cell_size), math.floor(dy / self.cell_size))
        self.votes.setdefault(cell, []).append(match)

    def winning_cell(self) -> tuple[int, int]:
        """Most-voted cell; ties prefer the cell center closest to the
        origin, then lexicographic index."""

        def key(item):
            (ci, cj), members = item
            cx = (ci + 0.5) * self.cell_size
            cy = (cj + 0.5) * self.cell_size
            return (-len(members), cx * cx + cy * cy, ci, cj)

        return min(self.votes.items(), key=key)[0]


@dataclass(frozen=True)
class TranslationModel:
    """Estimated (tx, ty) plus the votes that produced it.

    ``tx``/``ty`` keep full precision; rounding to whole pixels happens
    at warp time.
    """

    tx: float
    ty: float
    inliers: tuple[Match, ...]
    cell: tuple[int, int]
    aggregation: str
    stats: MatchStats

    @staticmethod
    def identity() -> "TranslationModel":
        return TranslationModel(
            tx=0.0,
            ty=0.0,
            inliers=(),
            cell=(0, 0),
            aggregation="l1",
            stats=MatchStats(a_num=1, v_num=1),
        )


def select_reference(keypoint_counts: list[int]) -> int:
    """Index of the image with the most keypoints; ties pick the lowest."""
    if len(keypoint_counts) < 2:
        raise ValueError("need at least two images to select a reference")
    return int(np.argmax(keypoint_counts))


def hough_vote(
    matches: list[Match],
    cell_size: float = DEFAULT_CELL_SIZE,
    aggregation: str = "l1",
) -> TranslationModel:
    """Estimate the translation supported by the largest vote cell.

    Args:
        matches: matched pairs (normally the top-k by distance).
        cell_size: displacement-space cell side, in pixels.
        aggregation: "l1" for componentwise median of the inlier
            displacements, "l2" for their mean.
    """
    if not matches:
        raise RegistrationError("no matches to vote with")
    if cell_size <= 0:
        raise ValueError(f"cell_size must be positive, got {cell_size}")
    if aggregation not in ("l1", "l2"):
        raise ValueError(f"aggregation must be 'l1' or 'l2', got {aggregation!r}")

    grid = VoteGrid(cell_size=cell_size)
    for m in matches:
        grid.cast(m)
    cell = grid.winning_cell()
    inliers = grid.votes[cell]

    dxs = np.array([m.reference.x - m.sensed.x for m in inliers])
    dys = np.array([m.reference.y - m.sensed.y for m in inliers])
    if aggregation == "l1":
        tx, ty = float(np.median(dxs)), float(np.median(dys))
    else:
        tx, ty = float(dxs.mean()), float(dys.mean())

    return TranslationModel(
        tx=tx,
        ty=ty,
        inliers=tuple(inliers),
        cell=cell,
        aggregation=aggregation,
        stats=MatchStats(a_num=len(matches), v_num=len(inliers)),
    )


def register_stack(
    images: list[Image], models: list[TranslationModel | None]
) -> list[tuple[Image, ValidityMask]]:
    """Warp every sensed image into the reference frame.

    ``models`` holds one entry per image; exactly the reference image
    carries None and passes through with an all-true mask.
    """
    if len(models) != len(images):
        raise ValueError("one model entry per image required")
    if sum(1 for m in models if m is None) != 1:
        raise ValueError("exactly one image (the reference) must have model None")

    out = []
    for img, model in zip(images, models):
        if model is None:
            out.append((img, np.ones((img.height, img.width), dtype=bool)))
        else:
            out.append(translate(img, round(model.tx), round(model.ty)))
    return out
