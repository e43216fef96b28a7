"""Independent brute-force reference implementations used by the tests.

Everything here deliberately avoids the library's fast paths: plain
loops, explicit kernels and direct convolution, so oracle agreement
actually validates the summed-area-table shortcuts.
"""

import numpy as np


def naive_rect_sum(data: np.ndarray, x0: int, y0: int, x1: int, y1: int) -> float:
    """Double-loop sum over the inclusive rectangle, clipped to the image."""
    h, w = data.shape
    total = 0.0
    for y in range(max(y0, 0), min(y1, h - 1) + 1):
        for x in range(max(x0, 0), min(x1, w - 1) + 1):
            total += data[y, x]
    return total


def surf_kernels(w: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Explicit (Dxx, Dyy, Dxy) box-filter kernels of side w."""
    lobe = w // 3
    lw = 2 * lobe - 1
    pad = (w - lw) // 2
    dyy = np.zeros((w, w))
    dyy[0:lobe, pad : pad + lw] = 1.0
    dyy[lobe : 2 * lobe, pad : pad + lw] = -2.0
    dyy[2 * lobe :, pad : pad + lw] = 1.0
    dxx = dyy.T.copy()
    dxy = np.zeros((w, w))
    o = (lobe - 1) // 2
    dxy[o : o + lobe, o : o + lobe] = 1.0
    dxy[o : o + lobe, o + lobe + 1 : o + 2 * lobe + 1] = -1.0
    dxy[o + lobe + 1 : o + 2 * lobe + 1, o : o + lobe] = -1.0
    dxy[o + lobe + 1 : o + 2 * lobe + 1, o + lobe + 1 : o + 2 * lobe + 1] = 1.0
    return dxx, dyy, dxy


def naive_hessian_response(
    data: np.ndarray, w: int, alpha: float = 0.9
) -> tuple[np.ndarray, np.ndarray]:
    """Direct zero-padded convolution with the explicit kernels."""
    h, wd = data.shape
    half = (w - 1) // 2
    padded = np.pad(data, half)
    kxx, kyy, kxy = surf_kernels(w)
    dxx = np.zeros((h, wd))
    dyy = np.zeros((h, wd))
    dxy = np.zeros((h, wd))
    for dy in range(w):
        for dx in range(w):
            block = padded[dy : dy + h, dx : dx + wd]
            if kxx[dy, dx]:
                dxx += kxx[dy, dx] * block
            if kyy[dy, dx]:
                dyy += kyy[dy, dx] * block
            if kxy[dy, dx]:
                dxy += kxy[dy, dx] * block
    area = float(w * w)
    dxx /= area
    dyy /= area
    dxy /= area
    return dxx * dyy - (alpha * dxy) ** 2, (dxx + dyy) >= 0.0


def naive_extrema(ss, threshold: float) -> set[tuple[int, int, int, int]]:
    """Triple-loop 27-neighbor strict maxima: {(octave, slot, y, x)}."""
    out = set()
    for octave, slot, layer in ss.detection_slots():
        row = ss.octave_layers[octave - 1]
        grids = [row[slot - 1].response, layer.response, row[slot + 1].response]
        h, w = layer.response.shape
        for y in range(1, h - 1):
            for x in range(1, w - 1):
                c = grids[1][y, x]
                if c <= threshold:
                    continue
                is_max = True
                for g in grids:
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            if g is grids[1] and dy == 0 and dx == 0:
                                continue
                            if c <= g[y + dy, x + dx]:
                                is_max = False
                                break
                        if not is_max:
                            break
                    if not is_max:
                        break
                if is_max:
                    out.add((octave, slot, y, x))
    return out


def naive_match(sensed, reference, ratio_threshold: float):
    """Exhaustive matcher with post-hoc sign check.

    Computes every sensed-reference distance, then restricts candidates
    to equal Laplacian sign, applies the ratio test and returns
    {(sensed_index, reference_index): (distance, ratio)}.
    """
    out = {}
    for si, sd in enumerate(sensed):
        dists = np.array(
            [float(np.linalg.norm(sd.values - rd.values)) for rd in reference]
        )
        cand = [
            ri
            for ri, rd in enumerate(reference)
            if rd.keypoint.laplacian_sign == sd.keypoint.laplacian_sign
        ]
        if len(cand) < 2:
            continue
        cd = dists[cand]
        order = np.lexsort((cand, cd))  # distance, then lowest index
        first, second = order[0], None
        for o in order[1:]:
            if o != first:
                second = o
                break
        d1 = float(cd[first])
        d2 = float(cd[second])
        if d2 <= 0.0:
            continue
        ratio = d1 / d2
        if ratio <= ratio_threshold:
            out[(si, cand[first])] = (d1, ratio)
    return out


def naive_guided_filter(
    guide: np.ndarray, weights: np.ndarray, radius: int, eps: float
) -> np.ndarray:
    """Per-window loops over clipped windows; no integral images."""
    h, w = guide.shape
    a = np.zeros((h, w))
    b = np.zeros((h, w))
    for y in range(h):
        y0, y1 = max(0, y - radius), min(h, y + radius + 1)
        for x in range(w):
            x0, x1 = max(0, x - radius), min(w, x + radius + 1)
            gwin = guide[y0:y1, x0:x1]
            wwin = weights[y0:y1, x0:x1]
            mg = gwin.mean()
            mw = wwin.mean()
            cov = (gwin * wwin).mean() - mg * mw
            var = (gwin * gwin).mean() - mg * mg
            a[y, x] = cov / (var + eps)
            b[y, x] = mw - a[y, x] * mg
    out = np.zeros((h, w))
    for y in range(h):
        y0, y1 = max(0, y - radius), min(h, y + radius + 1)
        for x in range(w):
            x0, x1 = max(0, x - radius), min(w, x + radius + 1)
            out[y, x] = a[y0:y1, x0:x1].mean() * guide[y, x] + b[y0:y1, x0:x1].mean()
    return np.clip(out, 0.0, 1.0)


def naive_saliency(img, cfg):
    """Elementwise max over detection layers recomputed one by one."""
    from focusfuse.imgcore import integral
    from focusfuse.scalespace import filter_size, hessian_response

    ii = integral(img)
    out = None
    for o in range(1, cfg.octaves + 1):
        for k in range(2, cfg.layers + 2):  # detection layers only
            resp, _ = hessian_response(ii, filter_size(o, k), cfg.alpha)
            out = resp if out is None else np.maximum(out, resp)
    return out
