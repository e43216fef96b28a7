"""Synthetic misaligned multi-focus stacks and quality metrics.

Stacks are built from a single all-sharp base image: each stack member
keeps one horizontal band sharp, Gaussian-blurs the rest, and is then
shifted by a planted integer translation. The first image gets the
largest sharp band so that automatic reference selection has a clear
winner to find; its shift is drawn like any other, so the pipeline must
discover it rather than assume zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .imgcore import Image, translate
from .pipeline import RunReport


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    """Recipe for one misaligned multi-focus stack."""

    base: Image
    n: int = 4
    max_shift: int = 20
    sigma: float = 3.0
    seed: int = 0
    masks: tuple[np.ndarray, ...] | None = None  # optional sharp-region masks

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("stack needs at least two images")
        if self.max_shift < 0:
            raise ValueError("max_shift must be non-negative")
        if self.max_shift * 4 >= min(self.base.width, self.base.height):
            raise ValueError("max_shift must stay below a quarter of the image extent")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.masks is not None:
            if len(self.masks) != self.n:
                raise ValueError("one sharp-region mask per image required")
            union = np.zeros(self.masks[0].shape, dtype=bool)
            for m in self.masks:
                union |= m
            if not union.all():
                raise ValueError("sharp-region masks must jointly cover the image")


@dataclass(frozen=True)
class QualityReport:
    """Ground-truth metrics for one fused stack."""

    input_rmse: list[float]
    fused_rmse: float
    input_sharpness: list[float]
    fused_sharpness: float
    recovery_error: list[tuple[float, float]]  # per sensed image, |planted - recovered|
    valid_fraction: float

    def max_recovery_error(self) -> float:
        if not self.recovery_error:
            return 0.0
        return max(max(ex, ey) for ex, ey in self.recovery_error)


def band_masks(height: int, width: int, n: int) -> list[np.ndarray]:
    """Horizontal sharp bands covering the image; band 0 is the largest."""
    first = min(height, height // n + max(1, height // (2 * n)))
    rest = height - first
    edges = [0, first]
    for i in range(1, n):
        edges.append(first + (rest * i) // (n - 1) if n > 1 else height)
    masks = []
    for i in range(n):
        m = np.zeros((height, width), dtype=bool)
        m[edges[i] : edges[i + 1]] = True
        masks.append(m)
    return masks


def _blur_outside(base: Image, mask: np.ndarray, sigma: float) -> Image:
    if sigma == 0:
        return base
    if base.channels == 1:
        blurred = ndimage.gaussian_filter(base.data, sigma)
    else:
        blurred = np.stack(
            [ndimage.gaussian_filter(base.data[:, :, c], sigma) for c in range(3)],
            axis=-1,
        )
    sel = mask if base.channels == 1 else mask[:, :, None]
    return Image(np.clip(np.where(sel, base.data, blurred), 0.0, 1.0))


def generate(spec: SyntheticSpec) -> tuple[list[Image], Image, list[tuple[int, int]]]:
    """Build (stack, ground truth, planted shifts) from a spec.

    Image i is the base with everything outside its sharp band blurred,
    then translated by an integer shift drawn uniformly from
    [-max_shift, max_shift]^2. Fixing the seed fixes the stack bit for
    bit.
    """
    rng = np.random.default_rng(spec.seed)
    masks = list(spec.masks) if spec.masks is not None else band_masks(
        spec.base.height, spec.base.width, spec.n
    )
    shifts = [
        (int(rng.integers(-spec.max_shift, spec.max_shift + 1)),
         int(rng.integers(-spec.max_shift, spec.max_shift + 1)))
        for _ in range(spec.n)
    ]
    stack = []
    for mask, (tx, ty) in zip(masks, shifts):
        img = _blur_outside(spec.base, mask, spec.sigma)
        shifted, _ = translate(img, tx, ty)
        stack.append(shifted)
    return stack, spec.base, shifts


def variance_of_laplacian(img: Image) -> float:
    """Classic sharpness score: variance of the Laplacian response."""
    gray = img.data if img.channels == 1 else img.data.mean(axis=2)
    return float(ndimage.laplace(gray).var())


def _rmse(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    diff = (a - b)[mask]  # (n,) or (n, channels)
    return float(np.sqrt((diff ** 2).sum() / max(diff.size, 1)))


def evaluate(
    fused: Image,
    stack: list[Image],
    truth: Image,
    planted_shifts: list[tuple[int, int]],
    report: RunReport,
) -> QualityReport:
    """Score a fused result against the planted ground truth.

    Inputs are aligned with the *recovered* shifts and the ground truth
    with the *planted* reference shift; RMSE is computed only on pixels
    valid in every aligned mask.
    """
    ref = report.reference_index
    recovered = report.recovered_shifts()
    n = len(stack)
    if len(planted_shifts) != n or len(recovered) != n:
        raise ValueError("stack, shifts and report disagree on stack size")

    truth_aligned, truth_mask = translate(truth, *planted_shifts[ref])
    aligned = []
    common = truth_mask.copy()
    for img, shift in zip(stack, recovered):
        a, m = translate(img, *shift)
        aligned.append(a)
        common &= m

    input_rmse = [_rmse(a.data, truth_aligned.data, common) for a in aligned]
    fused_rmse = _rmse(fused.data, truth_aligned.data, common)

    errors = []
    for i, (rec, planted) in enumerate(zip(recovered, planted_shifts)):
        if i == ref:
            continue
        expect = (planted_shifts[ref][0] - planted[0], planted_shifts[ref][1] - planted[1])
        errors.append((abs(rec[0] - expect[0]), abs(rec[1] - expect[1])))

    return QualityReport(
        input_rmse=input_rmse,
        fused_rmse=fused_rmse,
        input_sharpness=[variance_of_laplacian(img) for img in stack],
        fused_sharpness=variance_of_laplacian(fused),
        recovery_error=errors,
        valid_fraction=float(common.mean()),
    )


def textured_base(size: int = 512, seed: int = 0, channels: int = 1) -> Image:
    """A reproducible multi-scale textured test image.

    Blends smoothed noise at several correlation lengths so structure
    exists both at fine scales (killed by defocus blur) and coarse scales
    (surviving it), the way real specimens do.
    """
    rng = np.random.default_rng(seed)
    acc = np.zeros((size, size))
    for sigma, gain in ((1.5, 0.5), (6.0, 1.0), (24.0, 1.5)):
        layer = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma)
        sd = layer.std()
        if sd > 0:
            acc += gain * layer / sd
    acc = (acc - acc.min()) / (acc.max() - acc.min())
    if channels == 3:
        shifts = [np.roll(acc, s, axis=1) for s in (0, 3, 7)]
        acc = np.clip(np.stack(shifts, axis=-1), 0.0, 1.0)
    return Image(acc)
