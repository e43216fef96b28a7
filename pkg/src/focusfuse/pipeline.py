"""End-to-end fusion pipeline: one scale space per image feeds both
keypoint detection and saliency, so registration and fusion share all
the heavy response computation.

Per image: grayscale -> scale space -> detect/describe + saliency.
Across images: pick the keypoint-richest reference, match every sensed
image against it, Hough-vote a translation, warp images and saliency
maps into the reference frame, turn saliency argmaxes into weights,
refine them with a guided filter, and blend.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import fusion, matching
from .features import (
    DEFAULT_DETECTION_THRESHOLD,
    SUPPORTED_DESCRIPTOR_DIMS,
    describe_all,
    detect,
)
from .imgcore import (
    Image,
    load_image,
    save_normalized_png,
    to_grayscale,
    translate,
    translate_grid,
)
from .matching import match_descriptors, top_k, write_matches_csv
from .registration import (
    DEFAULT_CELL_SIZE,
    RegistrationError,
    TranslationModel,
    hough_vote,
    select_reference,
)
from .scalespace import ScaleSpaceConfig, build_scale_space, max_feasible_octaves

IMAGE_EXTENSIONS = (".png", ".tif", ".tiff", ".bmp")

_STAGES = (
    "scale_space",
    "detect",
    "describe",
    "match",
    "vote",
    "warp",
    "weights",
    "filter",
    "fuse",
)


@dataclass(frozen=True)
class PipelineConfig:
    """Tuning knobs of the full pipeline; defaults follow the standard
    operating point (5 octaves, 2 layers, 64-d descriptors, ratio 0.8,
    top-20 voting)."""

    octaves: int = 5
    layers: int = 2
    descriptor_dim: int = 64
    ratio_threshold: float = 0.8
    top_k: int = 20
    cell_size: float = DEFAULT_CELL_SIZE
    aggregation: str = "l1"
    detection_threshold: float = DEFAULT_DETECTION_THRESHOLD
    gf_radius: int = 45
    gf_epsilon: float = 0.3
    reference: int | None = None  # None = auto-select by keypoint count
    skip_unregistrable: bool = False
    save_saliency: str | None = None
    save_weights: str | None = None
    save_keypoints: str | None = None
    save_responses: str | None = None
    save_matches: str | None = None

    def __post_init__(self):
        if self.descriptor_dim not in SUPPORTED_DESCRIPTOR_DIMS:
            raise ValueError(
                f"descriptor_dim must be one of {SUPPORTED_DESCRIPTOR_DIMS}"
            )
        if not 0 < self.ratio_threshold <= 1:
            raise ValueError("ratio_threshold must lie in (0, 1]")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.aggregation not in ("l1", "l2"):
            raise ValueError("aggregation must be 'l1' or 'l2'")

    def scale_space_config(self, octaves: int | None = None) -> ScaleSpaceConfig:
        return ScaleSpaceConfig(octaves=octaves or self.octaves, layers=self.layers)


@dataclass
class RunReport:
    """Everything a run observed: counts, registration diagnostics,
    per-stage timings and the layer-build instrumentation."""

    images: list[str]
    keypoint_counts: list[int]
    reference_index: int
    octaves_requested: int
    octaves_effective: int
    registrations: list[dict]
    layer_builds: list[dict]
    timings: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def recovered_shifts(self) -> list[tuple[int, int] | None]:
        """Integer warp applied per image; None when registration failed."""
        out = []
        for i, reg in enumerate(self.registrations):
            if i == self.reference_index:
                out.append((0, 0))
            elif reg.get("registered"):
                out.append((round(reg["tx"]), round(reg["ty"])))
            else:
                out.append(None)
        return out

    @property
    def layer_builds_deduplicated(self) -> bool:
        """True when every response layer was computed exactly once."""
        return all(b["built"] == b["unique"] for b in self.layer_builds)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def write_json(self, path: str | Path) -> None:
        with open(Path(path), "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _resolve_inputs(
    inputs, names: Sequence[str] | None = None
) -> tuple[list[str], list[Image]]:
    if isinstance(inputs, (str, Path)):
        root = Path(inputs)
        if not root.is_dir():
            raise ValueError(f"input directory not found: {root}")
        paths = sorted(
            p for p in root.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS
        )
        if not paths:
            raise ValueError(f"no {'/'.join(IMAGE_EXTENSIONS)} images in {root}")
        return [p.name for p in paths], [load_image(p) for p in paths]

    items = list(inputs)
    if not items:
        raise ValueError("empty input list")
    if isinstance(items[0], Image):
        resolved_names = list(names) if names else [
            f"stack_{i:02d}" for i in range(len(items))
        ]
        return resolved_names, items
    paths = [Path(p) for p in items]
    return [p.name for p in paths], [load_image(p) for p in paths]


class _Timer:
    def __init__(self):
        self.acc = {k: 0.0 for k in _STAGES}

    def add(self, stage: str, t0: float) -> float:
        now = time.perf_counter()
        self.acc[stage] += now - t0
        return now


def run_pipeline(
    inputs, cfg: PipelineConfig | None = None, names: Sequence[str] | None = None
) -> tuple[Image, RunReport]:
    """Fuse a stack of unregistered multi-focus images.

    ``inputs`` may be a directory (members taken in lexicographic order),
    a list of file paths, or a list of in-memory Images. Raises
    ValueError for input problems and RegistrationError when a sensed
    image has no usable matches (unless ``skip_unregistrable``).

    Returns:
        (fused image, run report)
    """
    cfg = cfg or PipelineConfig()
    t_start = time.perf_counter()
    image_names, images = _resolve_inputs(inputs, names)

    if len(images) < 2:
        raise ValueError("need at least two input images")
    h, w, c = images[0].height, images[0].width, images[0].channels
    for name, img in zip(image_names, images):
        if (img.height, img.width, img.channels) != (h, w, c):
            raise ValueError(
                f"{name}: dimensions {img.width}x{img.height}x{img.channels} "
                f"do not match the first image ({w}x{h}x{c})"
            )

    feasible = max_feasible_octaves(w, h, cfg.layers)
    if feasible < 1:
        raise ValueError(f"images too small ({w}x{h}) for even one octave")
    octaves_effective = min(cfg.octaves, feasible)
    sscfg = cfg.scale_space_config(octaves_effective)

    timer = _Timer()
    grays: list[Image] = []
    kp_counts: list[int] = []
    descriptors: list[list] = []
    saliencies: list[fusion.SaliencyMap] = []
    layer_builds: list[dict] = []

    for name, img in zip(image_names, images):
        gray = to_grayscale(img)
        grays.append(gray)
        t0 = time.perf_counter()
        ss = build_scale_space(gray, sscfg)
        t0 = timer.add("scale_space", t0)
        kps = detect(ss, cfg.detection_threshold)
        t0 = timer.add("detect", t0)
        descs = describe_all(gray, kps, cfg.descriptor_dim, ii=ss.integral_image)
        descs = [d for d in descs if d.valid]
        t0 = timer.add("describe", t0)
        sal = fusion.saliency(ss)
        timer.add("scale_space", t0)  # saliency rides on the same grids

        kp_counts.append(len(kps))
        descriptors.append(descs)
        saliencies.append(sal)
        layer_builds.append(
            {"image": name, "built": ss.layers_built, "unique": ss.unique_layer_count}
        )
        if cfg.save_keypoints:
            _dump_keypoints(cfg.save_keypoints, name, kps)
        if cfg.save_responses:
            _dump_responses(cfg.save_responses, name, ss)
        del ss  # free the response grids; saliency and descriptors remain

    if cfg.reference is not None:
        if not 0 <= cfg.reference < len(images):
            raise ValueError(f"reference index {cfg.reference} out of range")
        reference = cfg.reference
    else:
        reference = select_reference(kp_counts)

    models: list[TranslationModel | None] = [None] * len(images)
    registrations: list[dict] = []
    dropped: set[int] = set()
    for i, name in enumerate(image_names):
        if i == reference:
            registrations.append({"image": name, "reference": True, "registered": True})
            continue
        try:
            if not descriptors[i] or not descriptors[reference]:
                raise RegistrationError(f"{name}: no valid descriptors to match")
            t0 = time.perf_counter()
            pairs = match_descriptors(
                descriptors[i], descriptors[reference], cfg.ratio_threshold
            )
            t0 = timer.add("match", t0)
            if cfg.save_matches:
                _ensure_dir(cfg.save_matches)
                write_matches_csv(
                    Path(cfg.save_matches) / f"{Path(name).stem}_matches.csv", pairs
                )
            voted = top_k(pairs, cfg.top_k)
            model = hough_vote(voted, cfg.cell_size, cfg.aggregation)
            timer.add("vote", t0)
        except RegistrationError as exc:
            if not cfg.skip_unregistrable:
                raise RegistrationError(f"{name}: {exc}") from exc
            dropped.add(i)
            registrations.append(
                {"image": name, "reference": False, "registered": False, "error": str(exc)}
            )
            continue
        models[i] = model
        registrations.append(
            {
                "image": name,
                "reference": False,
                "registered": True,
                "tx": model.tx,
                "ty": model.ty,
                "cell": list(model.cell),
                "a_num": model.stats.a_num,
                "v_num": model.stats.v_num,
                "accuracy": model.stats.accuracy,
                "inliers": len(model.inliers),
            }
        )

    keep = [i for i in range(len(images)) if i not in dropped]
    if len(keep) < 2:
        raise RegistrationError(
            "fewer than two images registered; nothing to fuse"
        )

    t0 = time.perf_counter()
    aligned: list[Image] = []
    aligned_grays: list[Image] = []
    masks = []
    aligned_sal: list[fusion.SaliencyMap] = []
    for i in keep:
        if i == reference:
            aligned.append(images[i])
            aligned_grays.append(grays[i])
            masks.append(np.ones((h, w), dtype=bool))
            aligned_sal.append(saliencies[i])
        else:
            tx, ty = round(models[i].tx), round(models[i].ty)
            img_t, mask = translate(images[i], tx, ty)
            gray_t = Image(translate_grid(grays[i].data, tx, ty)[0])
            aligned.append(img_t)
            aligned_grays.append(gray_t)
            masks.append(mask)
            aligned_sal.append(fusion.align_saliency(saliencies[i], models[i]))
    t0 = timer.add("warp", t0)

    weights = fusion.initial_weights(aligned_sal)
    t0 = timer.add("weights", t0)

    gf = fusion.GuidedFilterParams(radius=cfg.gf_radius, epsilon=cfg.gf_epsilon)
    refined = [fusion.guided_filter(g, w_init, gf) for g, w_init in zip(aligned_grays, weights)]
    t0 = timer.add("filter", t0)

    ref_pos = keep.index(reference)
    fused = fusion.fuse(aligned, refined, masks, reference_index=ref_pos)
    timer.add("fuse", t0)

    if cfg.save_saliency:
        _ensure_dir(cfg.save_saliency)
        for pos, i in enumerate(keep):
            save_normalized_png(
                Path(cfg.save_saliency) / f"{Path(image_names[i]).stem}_saliency.png",
                aligned_sal[pos].values,
            )
    if cfg.save_weights:
        _ensure_dir(cfg.save_weights)
        for pos, i in enumerate(keep):
            stem = Path(image_names[i]).stem
            save_normalized_png(
                Path(cfg.save_weights) / f"{stem}_weight_initial.png", weights[pos]
            )
            save_normalized_png(
                Path(cfg.save_weights) / f"{stem}_weight_refined.png", refined[pos]
            )

    timings = dict(timer.acc)
    timings["compute_total"] = sum(timer.acc.values())
    timings["pipeline_wall"] = time.perf_counter() - t_start

    report = RunReport(
        images=image_names,
        keypoint_counts=kp_counts,
        reference_index=reference,
        octaves_requested=cfg.octaves,
        octaves_effective=octaves_effective,
        registrations=registrations,
        layer_builds=layer_builds,
        timings=timings,
        config={
            "octaves": cfg.octaves,
            "layers": cfg.layers,
            "descriptor_dim": cfg.descriptor_dim,
            "ratio_threshold": cfg.ratio_threshold,
            "top_k": cfg.top_k,
            "cell_size": cfg.cell_size,
            "aggregation": cfg.aggregation,
            "detection_threshold": cfg.detection_threshold,
            "gf_radius": cfg.gf_radius,
            "gf_epsilon": cfg.gf_epsilon,
            "reference": cfg.reference,
            "skip_unregistrable": cfg.skip_unregistrable,
        },
    )
    return fused, report


SWEEP_AXES = ("octaves", "layers", "descriptor_dim")


def sweep(
    inputs,
    base_cfg: PipelineConfig | None = None,
    axes: dict[str, Sequence] | None = None,
    out_dir: str | Path | None = None,
    names: Sequence[str] | None = None,
) -> list[dict]:
    """Run the pipeline over a parameter grid and collect one row per point.

    Valid axes: octaves, layers, descriptor_dim. Rows carry the grid
    point, aggregate matching accuracy, per-stage timings, and the fused
    image path when ``out_dir`` is given.
    """
    base_cfg = base_cfg or PipelineConfig()
    axes = axes or {}
    for key in axes:
        if key not in SWEEP_AXES:
            raise ValueError(f"invalid sweep axis {key!r}; choose from {SWEEP_AXES}")

    grid: list[dict] = [{}]
    for key, values in axes.items():
        if not values:
            raise ValueError(f"sweep axis {key!r} has no values")
        grid = [dict(pt, **{key: int(v)}) for pt in grid for v in values]

    if isinstance(inputs, (str, Path)):
        names, loaded = _resolve_inputs(inputs)
    else:
        names, loaded = _resolve_inputs(inputs, names)

    rows = []
    for point in grid:
        cfg = dataclasses.replace(base_cfg, **point)
        fused, report = run_pipeline(loaded, cfg, names=names)
        accs = [
            r["accuracy"] for r in report.registrations if r.get("registered") and not r.get("reference")
        ]
        row = dict(point)
        row.update(
            {
                "accuracy_mean": float(np.mean(accs)) if accs else float("nan"),
                "accuracy_median": float(np.median(accs)) if accs else float("nan"),
                "match_time": report.timings["match"],
                "vote_time": report.timings["vote"],
                "scale_space_time": report.timings["scale_space"],
                "compute_total": report.timings["compute_total"],
                "octaves_effective": report.octaves_effective,
                "output": "",
            }
        )
        if out_dir is not None:
            _ensure_dir(out_dir)
            tag = "_".join(f"{k}{v}" for k, v in point.items()) or "base"
            out_path = Path(out_dir) / f"fused_{tag}.png"
            from .imgcore import save_image

            save_image(out_path, fused)
            row["output"] = str(out_path)
        rows.append(row)
    return rows


def write_sweep_csv(path: str | Path, rows: list[dict]) -> None:
    import csv

    if not rows:
        raise ValueError("no sweep rows to write")
    cols = list(rows[0].keys())
    with open(Path(path), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        writer.writerows(rows)


def _ensure_dir(d: str | Path) -> None:
    Path(d).mkdir(parents=True, exist_ok=True)


def _dump_keypoints(out_dir: str, name: str, kps) -> None:
    import csv

    _ensure_dir(out_dir)
    with open(Path(out_dir) / f"{Path(name).stem}_keypoints.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "scale", "response", "sign"])
        for kp in kps:
            writer.writerow([kp.x, kp.y, kp.scale, kp.response, int(kp.laplacian_sign)])


def _dump_responses(out_dir: str, name: str, ss) -> None:
    _ensure_dir(out_dir)
    seen = set()
    for oi, row in enumerate(ss.octave_layers, start=1):
        for layer in row:
            if id(layer) in seen:
                continue
            seen.add(id(layer))
            fname = f"{Path(name).stem}_o{layer.octave}_k{layer.index}_w{layer.size:03d}.png"
            save_normalized_png(Path(out_dir) / fname, layer.response)
