"""Scale-invariant saliency, non-max-suppression weight maps,
guided-filter refinement, and weighted blending.

The saliency of a pixel is the largest Hessian-determinant response it
attains over all detection layers of the scale space, so the maps come
for free once the scale space exists. After alignment, each pixel's most
salient image wins the initial (binary) weight; a guided filter driven
by the aligned image smooths those weights before the final normalized
blend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgcore import Image, ValidityMask, translate_grid
from .registration import TranslationModel
from .scalespace import ScaleSpace

#: Fusion weight grid in [0, 1]; binary in its initial form.
WeightMap = np.ndarray

_WEIGHT_FLOOR = 1e-8  # below this total weight the blend falls back to the mean


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    """Per-pixel maximum response across the scale space, plus validity."""

    values: np.ndarray
    mask: ValidityMask

    def __post_init__(self):
        if self.values.shape != self.mask.shape:
            raise ValueError("saliency values and mask must share dimensions")
        self.values.setflags(write=False)
        self.mask.setflags(write=False)


@dataclass(frozen=True)
class GuidedFilterParams:
    """Window radius and ridge regularizer of the guided filter."""

    radius: int = 45
    epsilon: float = 0.3

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError(f"radius must be >= 1, got {self.radius}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


def saliency(ss: ScaleSpace) -> SaliencyMap:
    """Elementwise maximum response over all detection layers."""
    out = None
    seen = set()
    for _, _, layer in ss.detection_slots():
        if id(layer) in seen:
            continue  # shared across octaves; the max would not change
        seen.add(id(layer))
        if out is None:
            out = layer.response.copy()
        else:
            np.maximum(out, layer.response, out=out)
    mask = np.ones(out.shape, dtype=bool)
    return SaliencyMap(values=out, mask=mask)


def align_saliency(s: SaliencyMap, model: TranslationModel) -> SaliencyMap:
    """Carry a saliency map into the reference frame of its model."""
    tx, ty = round(model.tx), round(model.ty)
    values, mask = translate_grid(s.values, tx, ty)
    if not s.mask.all():
        prev, _ = translate_grid(s.mask, tx, ty)
        mask &= prev
    return SaliencyMap(values=values, mask=mask)


def initial_weights(aligned: list[SaliencyMap]) -> list[WeightMap]:
    """Binary weight maps: 1 where an image is the most salient valid one.

    Ties go to the lowest image index. Pixels valid in no image get zero
    weight everywhere (the blend resolves them later).
    """
    if len(aligned) < 2:
        raise ValueError("need at least two saliency maps")
    shape = aligned[0].values.shape
    if any(s.values.shape != shape for s in aligned):
        raise ValueError("saliency maps must share dimensions")

    stack = np.stack([s.values for s in aligned])
    masks = np.stack([s.mask for s in aligned])
    stack = np.where(masks, stack, -np.inf)
    winner = np.argmax(stack, axis=0)  # first max = lowest index
    any_valid = masks.any(axis=0)
    out = []
    for i in range(len(aligned)):
        w = ((winner == i) & any_valid).astype(np.float64)
        out.append(w)
    return out


def _box_table(x: np.ndarray, r: int) -> np.ndarray:
    """Summed-area table padded so every (2r+1)-window lookup is a slice."""
    h, w = x.shape
    m = r + 1
    t = np.zeros((h + 1 + 2 * m, w + 1 + 2 * m), dtype=np.float64)
    inner = t[m + 1 : m + 1 + h, m + 1 : m + 1 + w]
    np.cumsum(x, axis=0, out=inner)
    np.cumsum(inner, axis=1, out=inner)
    t[m + 1 + h :, m + 1 : m + 1 + w] = inner[-1]
    t[m + 1 :, m + 1 + w :] = t[m + 1 :, m + w : m + w + 1]
    return t


def _box_sum(x: np.ndarray, r: int) -> np.ndarray:
    """Per-pixel sum over the (2r+1) x (2r+1) window clipped to the image."""
    h, w = x.shape
    m = r + 1
    t = _box_table(x, r)
    return (
        t[m + 1 + r : m + 1 + r + h, m + 1 + r : m + 1 + r + w]
        - t[m - r : m - r + h, m + 1 + r : m + 1 + r + w]
        - t[m + 1 + r : m + 1 + r + h, m - r : m - r + w]
        + t[m - r : m - r + h, m - r : m - r + w]
    )


def _window_counts(h: int, w: int, r: int) -> np.ndarray:
    ny = np.minimum(np.arange(h) + r, h - 1) - np.maximum(np.arange(h) - r, 0) + 1
    nx = np.minimum(np.arange(w) + r, w - 1) - np.maximum(np.arange(w) - r, 0) + 1
    return np.outer(ny, nx).astype(np.float64)


def guided_filter(
    guide: Image, weights: WeightMap, params: GuidedFilterParams
) -> WeightMap:
    """Edge-preserving refinement of a weight map against a guidance image.

    Per window, ridge regression fits weights = a * guide + b; the output
    at each pixel averages a * guide + b over every window covering it.
    Windows are clipped at the image border. All box means run in O(1)
    per pixel via summed-area tables, independent of the radius. The
    result is clamped to [0, 1].
    """
    if guide.channels != 1:
        raise ValueError("guidance image must be single-channel")
    g = guide.data
    if g.shape != weights.shape:
        raise ValueError("guide and weight map must share dimensions")
    r = params.radius
    n = _window_counts(*g.shape, r)

    mean_g = _box_sum(g, r) / n
    mean_w = _box_sum(weights, r) / n
    mean_gw = _box_sum(g * weights, r) / n
    mean_gg = _box_sum(g * g, r) / n
    var_g = mean_gg - mean_g * mean_g

    a = (mean_gw - mean_g * mean_w) / (var_g + params.epsilon)
    b = mean_w - a * mean_g

    out = _box_sum(a, r) / n
    out *= g
    out += _box_sum(b, r) / n
    np.clip(out, 0.0, 1.0, out=out)
    return out


def fuse(
    aligned_images: list[Image],
    refined_weights: list[WeightMap],
    masks: list[ValidityMask],
    reference_index: int = 0,
) -> Image:
    """Normalized weighted blend of the aligned stack.

    Masked-out pixels contribute zero weight. Where the total weight
    underflows, the blend falls back to the plain mean of the mask-valid
    images, or to the reference image's pixel if no image is valid there.
    """
    if not (len(aligned_images) == len(refined_weights) == len(masks)):
        raise ValueError("images, weights and masks must have equal length")
    if len(aligned_images) < 2:
        raise ValueError("need at least two images to fuse")
    shape = aligned_images[0].data.shape
    if any(img.data.shape != shape for img in aligned_images):
        raise ValueError("aligned images must share dimensions and channels")
    hw = shape[:2]
    if any(w.shape != hw for w in refined_weights) or any(m.shape != hw for m in masks):
        raise ValueError("weights and masks must match the image grid")

    color = aligned_images[0].channels == 3

    def chan(arr2d):
        return arr2d[:, :, None] if color else arr2d

    acc = np.zeros(shape)
    wsum = np.zeros(hw)
    vacc = np.zeros(shape)
    vcount = np.zeros(hw)
    for img, w, m in zip(aligned_images, refined_weights, masks):
        wm = np.clip(w, 0.0, 1.0) * m
        wsum += wm
        acc += chan(wm) * img.data
        vacc += chan(m.astype(np.float64)) * img.data
        vcount += m

    low = wsum < _WEIGHT_FLOOR
    none_valid = vcount == 0
    safe_w = np.where(low, 1.0, wsum)
    safe_c = np.where(none_valid, 1.0, vcount)
    out = acc / chan(safe_w)
    mean_valid = vacc / chan(safe_c)
    out = np.where(chan(low), mean_valid, out)
    if none_valid.any():
        out = np.where(chan(none_valid), aligned_images[reference_index].data, out)
    np.clip(out, 0.0, 1.0, out=out)
    return Image(out)
