"""Box-filter Hessian scale space.

Each layer holds the determinant-of-approximate-Hessian response of one
box-filter size, computed densely at every pixel from an integral image,
plus the sign of the Hessian trace. Filter sizes follow the progression
w(o, k) = (2^o * k + 1) * 3; octave o consists of the L + 2 consecutive
sizes k = 1 .. L+2, the middle L of which are detection layers (the outer
two exist so 3x3x3 non-maximum suppression has neighbors on both sides).
Sizes shared between octaves are computed once and the layer object is
reused.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgcore import Image, IntegralImage, integral

MIN_FILTER_SIZE = 9


@dataclass(frozen=True)
class ScaleSpaceConfig:
    """Scale-space shape: octave/layer counts and the Hessian balance weight."""

    octaves: int = 5
    layers: int = 2
    alpha: float = 0.9
    base_sigma: float = 1.2  # Gaussian scale approximated by the 9x9 filter

    def __post_init__(self):
        if not 1 <= self.octaves <= 8:
            raise ValueError(f"octaves must be in [1, 8], got {self.octaves}")
        if not 1 <= self.layers <= 8:
            raise ValueError(f"layers must be in [1, 8], got {self.layers}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


@dataclass(frozen=True, eq=False)
class ResponseLayer:
    """Dense Hessian-determinant response grid for one box-filter size.

    ``octave``/``index`` are the (o, k) of the first octave that needed
    this size; ``sign`` holds trace(H) >= 0 per pixel.
    """

    octave: int
    index: int
    size: int
    response: np.ndarray
    sign: np.ndarray

    def __post_init__(self):
        assert self.size == filter_size(self.octave, self.index)
        self.response.setflags(write=False)
        self.sign.setflags(write=False)


@dataclass(frozen=True, eq=False)
class ScaleSpace:
    """Per-octave response layers plus the source integral image.

    ``octave_layers[o]`` lists the L + 2 layers of octave o+1 in
    ascending filter size; entries may be shared across octaves.
    ``layers_built`` counts actual response computations, which equals
    the number of distinct filter sizes.
    """

    config: ScaleSpaceConfig
    width: int
    height: int
    octave_layers: tuple[tuple[ResponseLayer, ...], ...]
    integral_image: IntegralImage
    layers_built: int

    @property
    def unique_layer_count(self) -> int:
        return len({id(l) for row in self.octave_layers for l in row})

    def detection_slots(self):
        """Yield (octave_number, slot, layer) for every detection layer.

        ``slot`` indexes the octave's layer list; detection layers occupy
        slots 1 .. L, flanked by the border layers at 0 and L + 1.
        """
        for oi, row in enumerate(self.octave_layers, start=1):
            for slot in range(1, len(row) - 1):
                yield oi, slot, row[slot]


def filter_size(o: int, k: int) -> int:
    """Box-filter side length for octave ``o``, layer index ``k``."""
    if o < 1 or k < 1:
        raise ValueError(f"octave and layer indices start at 1, got ({o}, {k})")
    return ((1 << o) * k + 1) * 3


def octave_sizes(o: int, layers: int) -> list[int]:
    """All L + 2 filter sizes of one octave, including the border layers."""
    return [filter_size(o, k) for k in range(1, layers + 3)]


def max_feasible_octaves(width: int, height: int, layers: int) -> int:
    """Largest octave count whose biggest filter still fits the image."""
    limit = min(width, height)
    o = 0
    while o < 8 and filter_size(o + 1, layers + 2) <= limit:
        o += 1
    return o


def _check_size(w: int) -> int:
    if w < MIN_FILTER_SIZE or w % 2 == 0 or w % 6 != 3:
        raise ValueError(
            f"invalid filter size {w}: must be odd, >= {MIN_FILTER_SIZE} "
            "and congruent to 3 mod 6"
        )
    return w // 3


def _padded_table(ii: IntegralImage, margin: int) -> np.ndarray:
    """Extend a summed-area table so filter taps never leave it.

    Zero-padding the source image prepends zero rows/columns to the table
    and replicates its last row/column, so out-of-image taps reproduce
    clipped box sums exactly.
    """
    h1, w1 = ii.shape
    out = np.zeros((h1 + 2 * margin, w1 + 2 * margin), dtype=ii.dtype)
    out[margin : margin + h1, margin : margin + w1] = ii
    out[margin + h1 :, margin : margin + w1] = ii[-1]
    out[margin : margin + h1, margin + w1 :] = ii[:, -1:]
    out[margin + h1 :, margin + w1 :] = ii[-1, -1]
    return out


def _responses_from_table(
    table: np.ndarray, margin: int, height: int, width: int, w: int, alpha: float
) -> tuple[np.ndarray, np.ndarray]:
    """Dense (response, sign) grids from a padded summed-area table."""
    lobe = _check_size(w)
    half = (w - 1) // 2
    mid = (lobe - 1) // 2  # half-extent of the center band

    def col_diff(c0: int, c1: int, r_lo: int, r_hi: int) -> np.ndarray:
        # table rows covering pixel-row offsets [r_lo, r_hi], columns
        # differenced over the inclusive pixel-column span [c0, c1]
        rows = slice(margin + r_lo, margin + r_hi + height)
        return (
            table[rows, margin + c1 + 1 : margin + c1 + 1 + width]
            - table[rows, margin + c0 : margin + c0 + width]
        )

    def row_band(d: np.ndarray, base: int, r0: int, r1: int) -> np.ndarray:
        # inclusive pixel-row span [r0, r1] from a column-differenced table
        # whose row 0 corresponds to offset ``base``
        return d[r1 + 1 - base : r1 + 1 - base + height] - d[r0 - base : r0 - base + height]

    # Dyy: +1 / -2 / +1 bands stacked vertically, each lobe rows tall and
    # 2*lobe-1 columns wide; full strip minus 3x the middle band.
    d = col_diff(-(lobe - 1), lobe - 1, -half, half + 1)
    dyy = row_band(d, -half, -half, half)
    dyy -= 3.0 * row_band(d, -half, -mid, mid)

    # Dxx is the transpose layout: difference rows first, then columns.
    rows0 = slice(margin - (lobe - 1), margin - (lobe - 1) + height)
    rows1 = slice(margin + lobe, margin + lobe + height)
    d = table[rows1, margin - half : margin - half + width + w] - table[
        rows0, margin - half : margin - half + width + w
    ]
    dxx = d[:, w:] - d[:, :width]
    dxx -= 3.0 * (d[:, half + mid + 1 : half + mid + 1 + width] - d[:, half - mid : half - mid + width])

    # Dxy: four lobe x lobe quadrants around a one-pixel cross gap. A
    # single centered lobe-box grid B over an extended domain yields all
    # four quadrants as shifted views of B.
    delta = (lobe + 1) // 2  # quadrant-center offset from the pixel
    ext = delta
    rows = slice(margin - ext - mid, margin - ext - mid + height + 2 * ext + lobe)
    d = (
        table[rows, margin - ext + mid + 1 : margin - ext + mid + 1 + width + 2 * ext]
        - table[rows, margin - ext - mid : margin - ext - mid + width + 2 * ext]
    )
    b = d[lobe:] - d[: height + 2 * ext]  # centered lobe x lobe box sums
    dxy = (
        b[: height, : width]
        + b[2 * ext :, 2 * ext :]
        - b[: height, 2 * ext :]
        - b[2 * ext :, : width]
    )

    sign = (dxx + dyy) >= 0.0

    inv_area2 = 1.0 / (float(w) ** 4)
    np.multiply(dxx, dyy, out=dxx)
    np.multiply(dxy, dxy, out=dxy)
    response = dxx
    response *= inv_area2
    dxy *= (alpha * alpha) * inv_area2
    response -= dxy
    return response, sign


def hessian_response(
    ii: IntegralImage, w: int, alpha: float = 0.9
) -> tuple[np.ndarray, np.ndarray]:
    """Determinant-of-approximate-Hessian response for one filter size.

    Dxx, Dyy, Dxy are box-filter convolutions of size ``w`` (the standard
    9x9 lobe layout scaled up), each normalized by the filter area w**2;
    the response is Dxx*Dyy - (alpha*Dxy)**2 and the sign grid is
    Dxx + Dyy >= 0. Filter windows overhanging the image use clipped box
    sums.

    Args:
        ii: summed-area table of a single-channel image.
        w: odd filter size, >= 9 and congruent to 3 mod 6.
        alpha: relative weight on the mixed-derivative term.

    Returns:
        (response, sign) float64/bool grids at full image resolution.
    """
    _check_size(w)
    height = ii.shape[0] - 1
    width = ii.shape[1] - 1
    margin = (w - 1) // 2 + 1
    table = _padded_table(ii, margin)
    return _responses_from_table(table, margin, height, width, w, alpha)


def build_scale_space(img: Image, cfg: ScaleSpaceConfig) -> ScaleSpace:
    """Compute every response layer of the configured scale space.

    Layers whose filter size repeats across octaves are computed once and
    shared. Raises if the largest requested filter exceeds the image.
    """
    if img.channels != 1:
        raise ValueError("scale space requires a grayscale image")
    largest = filter_size(cfg.octaves, cfg.layers + 2)
    if min(img.width, img.height) < largest:
        feasible = max_feasible_octaves(img.width, img.height, cfg.layers)
        raise ValueError(
            f"image {img.width}x{img.height} is smaller than the largest "
            f"filter ({largest}px) for octaves={cfg.octaves}, "
            f"layers={cfg.layers}; reduce octaves to <= {feasible}"
        )

    ii = integral(img)
    margin = (largest - 1) // 2 + 1
    table = _padded_table(ii, margin)

    cache: dict[int, ResponseLayer] = {}
    built = 0
    rows = []
    for o in range(1, cfg.octaves + 1):
        row = []
        for k in range(1, cfg.layers + 3):
            w = filter_size(o, k)
            layer = cache.get(w)
            if layer is None:
                response, sign = _responses_from_table(
                    table, margin, img.height, img.width, w, cfg.alpha
                )
                layer = ResponseLayer(o, k, w, response, sign)
                cache[w] = layer
                built += 1
            row.append(layer)
        rows.append(tuple(row))

    return ScaleSpace(
        config=cfg,
        width=img.width,
        height=img.height,
        octave_layers=tuple(rows),
        integral_image=ii,
        layers_built=built,
    )
