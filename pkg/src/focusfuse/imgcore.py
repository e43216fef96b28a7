"""Raster images, integral images, constant-time box sums, and integer
translation with validity masks.

All pixel data is held as float64 normalized to [0, 1]. Grayscale images
are (height, width) arrays, color images (height, width, 3). Integral
images are (height+1, width+1) summed-area tables with a zero first row
and column, so any rectangle sum costs four lookups.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

# Rec. 601 luma weights used for color-to-grayscale reduction.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# PIL modes that indicate more than 8 bits per sample.
_DEEP_MODES = {"I", "I;16", "I;16B", "I;16L", "I;16N", "F"}

#: Boolean (height, width) grid; True where a warped image carries real
#: source data, False where translation exposed out-of-bounds area.
ValidityMask = np.ndarray

#: (height+1, width+1) float64 summed-area table.
IntegralImage = np.ndarray


@dataclass(frozen=True, eq=False)
class Image:
    """An immutable raster image with float64 samples in [0, 1].

    ``data`` is (height, width) for grayscale or (height, width, 3) for
    color. The array is made read-only on construction.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 3 and data.shape[2] == 1:
            data = data[:, :, 0]
        if data.ndim not in (2, 3) or (data.ndim == 3 and data.shape[2] != 3):
            raise ValueError(
                f"image data must be (h, w) or (h, w, 3), got shape {data.shape}"
            )
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if not np.isfinite(data).all():
            raise ValueError("image contains non-finite samples")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("image samples must lie in [0, 1]")
        if data.flags.writeable:
            data = data.copy() if data is self.data else data
            data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]


def to_grayscale(img: Image) -> Image:
    """Reduce an image to one channel with Rec. 601 luma weights.

    Single-channel input is returned unchanged.
    """
    if img.channels == 1:
        return img
    if img.channels != 3:
        raise ValueError(f"unsupported channel count: {img.channels}")
    r, g, b = LUMA_WEIGHTS
    gray = r * img.data[:, :, 0] + g * img.data[:, :, 1] + b * img.data[:, :, 2]
    # Luma weights sum to 1 but rounding can poke a hair above 1.0.
    np.clip(gray, 0.0, 1.0, out=gray)
    return Image(gray)


def integral(img: Image) -> IntegralImage:
    """Build the summed-area table of a single-channel image.

    Entry (y, x) equals the sum over the source rectangle [0, x) x [0, y).
    """
    if img.channels != 1:
        raise ValueError("integral image requires a single-channel image")
    h, w = img.data.shape
    table = np.zeros((h + 1, w + 1), dtype=np.float64)
    np.cumsum(img.data, axis=0, out=table[1:, 1:])
    np.cumsum(table[1:, 1:], axis=1, out=table[1:, 1:])
    return table


def box_sum(ii: IntegralImage, x0: int, y0: int, x1: int, y1: int) -> float:
    """Sum of pixels in the inclusive rectangle [x0..x1] x [y0..y1].

    Bounds are clipped to the image extent; rectangles that fall fully
    outside yield 0. Requires x0 <= x1 and y0 <= y1.
    """
    if x0 > x1 or y0 > y1:
        raise ValueError(f"degenerate rectangle ({x0},{y0})..({x1},{y1})")
    h = ii.shape[0] - 1
    w = ii.shape[1] - 1
    ax0 = min(max(x0, 0), w)
    ay0 = min(max(y0, 0), h)
    ax1 = min(max(x1 + 1, 0), w)
    ay1 = min(max(y1 + 1, 0), h)
    if ax1 <= ax0 or ay1 <= ay0:
        return 0.0
    return float(ii[ay1, ax1] - ii[ay0, ax1] - ii[ay1, ax0] + ii[ay0, ax0])


def translate(img: Image, tx: int, ty: int) -> tuple[Image, ValidityMask]:
    """Shift an image by whole pixels, zero-filling exposed area.

    Output pixel (x, y) takes input pixel (x - tx, y - ty) where that is
    in bounds; elsewhere the pixel is 0 and the mask is False. No
    interpolation is performed.
    """
    tx = int(tx)
    ty = int(ty)
    h, w = img.height, img.width
    if abs(tx) >= w or abs(ty) >= h:
        raise ValueError(
            f"translation ({tx},{ty}) exceeds image size {w}x{h}"
        )
    out = np.zeros_like(img.data)
    mask = np.zeros((h, w), dtype=bool)
    dx0, dx1 = max(tx, 0), min(w + tx, w)
    dy0, dy1 = max(ty, 0), min(h + ty, h)
    out[dy0:dy1, dx0:dx1] = img.data[dy0 - ty : dy1 - ty, dx0 - tx : dx1 - tx]
    mask[dy0:dy1, dx0:dx1] = True
    return Image(out), mask


def translate_grid(grid: np.ndarray, tx: int, ty: int) -> tuple[np.ndarray, ValidityMask]:
    """Like :func:`translate` but for a bare float grid (e.g. a saliency map)."""
    tx = int(tx)
    ty = int(ty)
    h, w = grid.shape[:2]
    if abs(tx) >= w or abs(ty) >= h:
        raise ValueError(f"translation ({tx},{ty}) exceeds grid size {w}x{h}")
    out = np.zeros_like(grid)
    mask = np.zeros((h, w), dtype=bool)
    dx0, dx1 = max(tx, 0), min(w + tx, w)
    dy0, dy1 = max(ty, 0), min(h + ty, h)
    out[dy0:dy1, dx0:dx1] = grid[dy0 - ty : dy1 - ty, dx0 - tx : dx1 - tx]
    mask[dy0:dy1, dx0:dx1] = True
    return out, mask


def load_image(path: str | Path) -> Image:
    """Load an 8-bit PNG, TIFF, or BMP file as a normalized Image.

    16-bit (and deeper) inputs are rejected.
    """
    path = Path(path)
    with PILImage.open(path) as pil:
        if pil.mode in _DEEP_MODES:
            raise ValueError(
                f"{path.name}: {pil.mode}-mode images (more than 8 bits per "
                "sample) are not supported; convert to 8-bit first"
            )
        if pil.mode == "L":
            arr = np.asarray(pil, dtype=np.float64)
        elif pil.mode == "RGB":
            arr = np.asarray(pil, dtype=np.float64)
        else:
            # Palette, LA, RGBA etc. collapse to plain 8-bit RGB.
            arr = np.asarray(pil.convert("RGB"), dtype=np.float64)
    return Image(arr / 255.0)


def save_image(path: str | Path, img: Image) -> None:
    """Write an image as an 8-bit file; format follows the extension."""
    arr = np.clip(img.data * 255.0, 0.0, 255.0).round().astype(np.uint8)
    PILImage.fromarray(arr).save(Path(path))


def save_normalized_png(path: str | Path, grid: np.ndarray) -> None:
    """Debug dump: min-max normalize a float grid and write an 8-bit PNG."""
    lo = float(grid.min())
    hi = float(grid.max())
    if hi - lo < 1e-30:
        arr = np.zeros(grid.shape, dtype=np.uint8)
    else:
        arr = ((grid - lo) / (hi - lo) * 255.0).round().astype(np.uint8)
    PILImage.fromarray(arr).save(Path(path))
