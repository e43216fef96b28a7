"""Scale-space extremum detection and upright Haar-wavelet descriptors.

Keypoints are pixels whose Hessian-determinant response strictly exceeds
all 26 neighbors in the 3x3x3 cube spanning the adjacent layers of the
same octave, refined by quadratic interpolation. Descriptors are upright
(no orientation assignment): per sub-region Gaussian-weighted sums of
Haar wavelet responses, concatenated and normalized to unit length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgcore import Image, IntegralImage, integral, to_grayscale
from .scalespace import ScaleSpace

# Suppresses flat-region noise on [0,1]-normalized responses; tunable.
DEFAULT_DETECTION_THRESHOLD = 1e-4

# descriptor length -> sub-region grid side (m x m regions, 4 values each)
_GRID_FOR_DIM = {16: 2, 36: 3, 64: 4, 100: 5, 144: 6}

SUPPORTED_DESCRIPTOR_DIMS = tuple(sorted(_GRID_FOR_DIM))

_SAMPLES_PER_REGION = 5  # 5x5 Haar samples per sub-region
_WINDOW_SCALES = 20  # descriptor window is 20s x 20s
_GAUSS_SIGMA_SCALES = 3.3  # weighting sigma, in units of keypoint scale


@dataclass(frozen=True)
class KeyPoint:
    """A detected blob: position, scale, response and Laplacian sign.

    ``octave``/``layer`` identify the detection layer (layer is its size
    index k, so the filter side was (2**octave * layer + 1) * 3).
    """

    x: float
    y: float
    scale: float
    response: float
    laplacian_sign: bool
    octave: int
    layer: int
    size: float


@dataclass(frozen=True, eq=False)
class Descriptor:
    """Unit-norm feature vector for one keypoint.

    ``valid`` is False when every Haar response in the window vanished
    (flat patch); invalid descriptors must not enter matching.
    """

    values: np.ndarray
    keypoint: KeyPoint
    valid: bool

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def _window_fits(x: float, y: float, scale: float, width: int, height: int) -> bool:
    # The 20s x 20s descriptor window must stay inside the image; outer
    # Haar taps may still clip, which box sums absorb.
    half = _WINDOW_SCALES / 2.0 * scale
    return (
        x - half >= -0.5
        and x + half <= width - 0.5
        and y - half >= -0.5
        and y + half <= height - 0.5
    )


def detect(
    ss: ScaleSpace,
    threshold: float = DEFAULT_DETECTION_THRESHOLD,
    refine: bool = True,
) -> list[KeyPoint]:
    """Find scale-space extrema above ``threshold``.

    A pixel qualifies when its response strictly exceeds its 26 neighbors
    in the adjacent layers of its octave. With ``refine`` a 3x3x3
    quadratic fit shifts (x, y, scale); fits that land more than half a
    step away are rejected, as are keypoints whose descriptor window
    would leave the image. Without ``refine`` the raw grid extrema are
    returned unrefined and unpruned. Results are sorted by descending
    response.
    """
    height, width = ss.height, ss.width
    found: list[KeyPoint] = []

    for octave, slot, layer in ss.detection_slots():
        row = ss.octave_layers[octave - 1]
        c = layer.response
        low = row[slot - 1].response
        up = row[slot + 1].response

        cand = (c > threshold)
        cand[0, :] = cand[-1, :] = False
        cand[:, 0] = cand[:, -1] = False
        ys, xs = np.nonzero(cand)
        if ys.size == 0:
            continue
        center = c[ys, xs]

        # in-plane ring first; most candidates die here
        keep = np.ones(ys.size, dtype=bool)
        for dy, dx in ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)):
            keep &= center > c[ys + dy, xs + dx]
        ys, xs, center = ys[keep], xs[keep], center[keep]
        if ys.size == 0:
            continue
        keep = np.ones(ys.size, dtype=bool)
        for grid in (low, up):
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    keep &= center > grid[ys + dy, xs + dx]
        ys, xs, center = ys[keep], xs[keep], center[keep]
        if ys.size == 0:
            continue

        size = float(layer.size)
        step = 3.0 * (1 << octave)  # filter-size step within this octave
        signs = layer.sign[ys, xs]

        if not refine:
            for yi, xi, resp, sg in zip(ys, xs, center, signs):
                found.append(
                    KeyPoint(
                        x=float(xi),
                        y=float(yi),
                        scale=1.2 * size / 9.0,
                        response=float(resp),
                        laplacian_sign=bool(sg),
                        octave=octave,
                        layer=layer.index,
                        size=size,
                    )
                )
            continue

        offsets, ok = _quadratic_offsets(c, low, up, ys, xs)
        for i in range(ys.size):
            if not ok[i]:
                continue
            dx, dy, dsz = offsets[i]
            x = float(xs[i] + dx)
            y = float(ys[i] + dy)
            sz = size + float(dsz) * step
            scale = 1.2 * sz / 9.0
            if not _window_fits(x, y, scale, width, height):
                continue
            found.append(
                KeyPoint(
                    x=x,
                    y=y,
                    scale=scale,
                    response=float(center[i]),
                    laplacian_sign=bool(signs[i]),
                    octave=octave,
                    layer=layer.index,
                    size=sz,
                )
            )

    found.sort(key=lambda k: (-k.response, k.octave, k.layer, k.y, k.x))
    return found


def _quadratic_offsets(c, low, up, ys, xs):
    """Batched 3x3x3 quadratic peak fit around (ys, xs).

    Returns (offsets[n, 3] as (dx, dy, dscale), ok[n]); fits with any
    offset magnitude above 0.5 or a singular curvature matrix are
    rejected.
    """
    n = ys.size
    cc = c[ys, xs]
    gx = 0.5 * (c[ys, xs + 1] - c[ys, xs - 1])
    gy = 0.5 * (c[ys + 1, xs] - c[ys - 1, xs])
    gs = 0.5 * (up[ys, xs] - low[ys, xs])
    hxx = c[ys, xs + 1] + c[ys, xs - 1] - 2.0 * cc
    hyy = c[ys + 1, xs] + c[ys - 1, xs] - 2.0 * cc
    hss = up[ys, xs] + low[ys, xs] - 2.0 * cc
    hxy = 0.25 * (
        c[ys + 1, xs + 1] - c[ys + 1, xs - 1] - c[ys - 1, xs + 1] + c[ys - 1, xs - 1]
    )
    hxs = 0.25 * (up[ys, xs + 1] - up[ys, xs - 1] - low[ys, xs + 1] + low[ys, xs - 1])
    hys = 0.25 * (up[ys + 1, xs] - up[ys - 1, xs] - low[ys + 1, xs] + low[ys - 1, xs])

    hess = np.empty((n, 3, 3))
    hess[:, 0, 0] = hxx
    hess[:, 1, 1] = hyy
    hess[:, 2, 2] = hss
    hess[:, 0, 1] = hess[:, 1, 0] = hxy
    hess[:, 0, 2] = hess[:, 2, 0] = hxs
    hess[:, 1, 2] = hess[:, 2, 1] = hys
    rhs = -np.stack([gx, gy, gs], axis=1)

    dets = np.linalg.det(hess)
    ok = np.abs(dets) > 1e-30
    offsets = np.zeros((n, 3))
    if ok.any():
        offsets[ok] = np.linalg.solve(hess[ok], rhs[ok][:, :, None])[:, :, 0]
    ok &= np.all(np.abs(offsets) <= 0.5, axis=1)
    return offsets, ok


def describe_all(
    img: Image,
    keypoints: list[KeyPoint],
    dim: int = 64,
    ii: IntegralImage | None = None,
) -> list[Descriptor]:
    """Upright descriptors for many keypoints in one batched pass.

    The 20s x 20s window around each keypoint is sampled on a 5m x 5m
    grid (m x m sub-regions); at each sample the Haar x/y responses of
    size 2s are taken from the integral image, Gaussian-weighted
    (sigma = 3.3s), and pooled per sub-region as
    (sum dx, sum dy, sum |dx|, sum |dy|).
    """
    if dim not in _GRID_FOR_DIM:
        raise ValueError(
            f"descriptor dim must be one of {SUPPORTED_DESCRIPTOR_DIMS}, got {dim}"
        )
    if not keypoints:
        return []
    m = _GRID_FOR_DIM[dim]
    gray = to_grayscale(img)
    if ii is None:
        ii = integral(gray)
    height = ii.shape[0] - 1
    width = ii.shape[1] - 1

    q = _SAMPLES_PER_REGION * m
    sc = np.array([kp.scale for kp in keypoints])
    kx = np.array([kp.x for kp in keypoints])
    ky = np.array([kp.y for kp in keypoints])
    n = sc.size

    # ideal (unrounded) sample offsets from the keypoint, in pixels
    lattice = np.arange(q) - (q - 1) / 2.0
    spacing = (_WINDOW_SCALES * sc / q)[:, None]
    du = lattice[None, :] * spacing  # (n, q)
    sig2 = 2.0 * (_GAUSS_SIGMA_SCALES * sc) ** 2
    gauss = np.exp(-(du[:, :, None] ** 2 + du[:, None, :] ** 2) / sig2[:, None, None])

    px = np.rint(kx[:, None] + du).astype(np.int64)  # (n, q)
    py = np.rint(ky[:, None] + du).astype(np.int64)
    sr = np.maximum(1, np.rint(sc).astype(np.int64))  # Haar half-size, (n,)

    # corner lattice for both Haar boxes: rows {py-sr, py, py+sr} x
    # cols {px-sr, px, px+sr}, clipped so off-image taps read as zero
    rows = np.stack([py - sr[:, None], py, py + sr[:, None]], axis=0)
    cols = np.stack([px - sr[:, None], px, px + sr[:, None]], axis=0)
    np.clip(rows, 0, height, out=rows)
    np.clip(cols, 0, width, out=cols)

    # 9 gathers of shape (n, q, q); y samples vary along axis 1
    t = [
        [ii[rows[r][:, :, None], cols[c][:, None, :]] for c in range(3)]
        for r in range(3)
    ]

    left = t[2][1] - t[0][1] - t[2][0] + t[0][0]
    right = t[2][2] - t[0][2] - t[2][1] + t[0][1]
    dx = right - left
    top = t[1][2] - t[0][2] - t[1][0] + t[0][0]
    bottom = t[2][2] - t[1][2] - t[2][0] + t[1][0]
    dy = bottom - top

    dx *= gauss
    dy *= gauss
    s = _SAMPLES_PER_REGION
    dx = dx.reshape(n, m, s, m, s)
    dy = dy.reshape(n, m, s, m, s)
    feats = np.stack(
        [
            dx.sum(axis=(2, 4)),
            dy.sum(axis=(2, 4)),
            np.abs(dx).sum(axis=(2, 4)),
            np.abs(dy).sum(axis=(2, 4)),
        ],
        axis=-1,
    ).reshape(n, dim)

    norms = np.linalg.norm(feats, axis=1)
    valid = norms > 1e-12
    feats[valid] /= norms[valid, None]

    out = []
    for i, kp in enumerate(keypoints):
        vec = feats[i]
        vec.setflags(write=False)
        out.append(Descriptor(values=vec, keypoint=kp, valid=bool(valid[i])))
    return out


def describe(
    img: Image, kp: KeyPoint, dim: int = 64, ii: IntegralImage | None = None
) -> Descriptor:
    """Descriptor for a single keypoint; see :func:`describe_all`."""
    return describe_all(img, [kp], dim=dim, ii=ii)[0]
