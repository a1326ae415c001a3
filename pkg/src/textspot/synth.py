"""Deterministic synthetic scene-text generator.

Words from a 5x7 bitmap font are scaled, rotated, and optionally bent
along a circular arc, then splatted onto a noisy grayscale background.
Rendering works by inverse-mapping every pixel center into the word's
straight glyph-cell frame, so arbitrary rotation/curvature costs one
vectorized pass per instance.

Ground-truth polygons exist for evaluation and bookkeeping only; the
training supervision written to annotations.jsonl is the transcription
list alone.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import fonts
from .charset import normalize_text
from .rng import Rng, derive_seed
from .tensor import Tensor

EPOCH_TS = "1970-01-01T00:00:00+00:00"  # fixed timestamp keeps synth output byte-stable

# short, common, CHARSET-only words; recognition difficulty comes from
# geometry and contrast, not vocabulary exotica
# Words come in prefix families (AT/ATE, CAR/CARD/CART, ...): no word is
# identified by its first two characters alone, so a reader must cover
# the whole instance - including where it ends - to transcribe it.
WORDS = [
    "AT", "ATE", "ATOM",
    "BE", "BED", "BEE", "BELT", "BEACH",
    "CAR", "CARD", "CART", "CARE",
    "DO", "DOG", "DOOR", "DOT",
    "EAR", "EARN", "EARTH",
    "FOR", "FORK", "FORM", "FORT",
    "GO", "GOT", "GOAT", "GOAL", "GOLD",
    "HAT", "HATE", "HATCH",
    "IN", "INK", "INTO",
    "JAR", "JARS",
    "KIT", "KITE",
    "LOW", "LOWER",
    "MAP", "MAPS", "MAPLE",
    "NO", "NOD", "NOTE", "NORTH",
    "ON", "ONE", "ONLY",
    "PIN", "PINE", "PINK", "PINT",
    "RAT", "RATE", "RATIO",
    "SEA", "SEAT", "SEAL", "SEAM",
    "STAR", "START", "STARE",
    "TEA", "TEAM", "TEAR", "TEACH",
    "UP", "UPON",
    "WIN", "WIND", "WINE", "WING",
]


class PlacementError(RuntimeError):
    """Instances could not be placed without overlap within the retry budget."""


@dataclass
class GtInstance:
    text: str
    polygon: list[tuple[float, float]]  # counter-clockwise (positive shoelace area)
    center: tuple[float, float]


@dataclass
class InstanceSpec:
    text: str
    height: float                     # char height in px (7 font rows)
    rotation: float = 0.0             # degrees, about the anchor
    curvature: float = 0.0            # sagitta / chord of the baseline arc
    contrast: float = 1.0
    anchor: tuple[float, float] | None = None  # box center px; None = auto-place


@dataclass
class SampleSpec:
    size: int
    instances: list[InstanceSpec]
    noise: float = 0.06
    bg_level: float = 0.12
    seed: int = 0


@dataclass
class SynthConfig:
    count: int = 100
    size: int = 64
    min_instances: int = 1
    max_instances: int = 1
    vocab: list[str] = field(default_factory=lambda: list(WORDS))
    height_range: tuple[float, float] = (10.0, 17.0)
    rotation_range: tuple[float, float] = (-20.0, 20.0)
    curvature_range: tuple[float, float] = (0.0, 0.3)
    contrast_range: tuple[float, float] = (0.5, 1.0)
    noise: float = 0.06
    bg_level: float = 0.12


# ---------------------------------------------------------------------------
# geometry


def _arc_radius(width: float, curvature: float) -> float:
    sagitta = curvature * width
    return sagitta / 2.0 + width * width / (8.0 * sagitta)


def _sagitta_from(radius: float, width: float) -> float:
    # inverse of _arc_radius: r = s/2 + w^2/(8 s)  =>  s = r - sqrt(r^2 - w^2/4)
    return radius - math.sqrt(max(radius * radius - width * width / 4.0, 0.0))


def _bend_point(u, v, width, box_h, radius):
    """Straight glyph-cell frame -> bent local frame (scalar or array)."""
    sagitta = _sagitta_from(radius, width)
    cx = width / 2.0
    cy = box_h + (radius - sagitta)
    phi = (u - cx) / radius
    rho = radius + (box_h - v)
    return cx + rho * np.sin(phi), cy - rho * np.cos(phi)


def _word_geometry(inst: InstanceSpec):
    q = inst.height / fonts.GLYPH_ROWS
    n = len(inst.text)
    width = (fonts.CHAR_ADVANCE * n - 1) * q
    box_h = fonts.GLYPH_ROWS * q
    return q, width, box_h


def _local_to_pixel(pts: np.ndarray, inst: InstanceSpec, width: float, box_h: float) -> np.ndarray:
    theta = math.radians(inst.rotation)
    c, s = math.cos(theta), math.sin(theta)
    centered = pts - np.array([width / 2.0, box_h / 2.0])
    rot = centered @ np.array([[c, s], [-s, c]])  # row-vector form of R(theta)
    return rot + np.asarray(inst.anchor, dtype=float)


def instance_polygon(inst: InstanceSpec) -> list[tuple[float, float]]:
    """Tight oriented outline of the lit glyph cells, in pixel space.

    Straight text gives the 4 corners of the lit-cell box; curved text
    samples the top and bottom edges along the arc. Output is
    counter-clockwise (positive shoelace area).
    """
    q, width, box_h = _word_geometry(inst)
    c0, c1 = fonts.lit_column_range(inst.text)
    r0, r1 = fonts.lit_row_range(inst.text)
    u0, u1 = c0 * q, c1 * q
    v0, v1 = r0 * q, r1 * q

    if inst.curvature < 1e-9:
        local = np.array([(u0, v0), (u1, v0), (u1, v1), (u0, v1)])
    else:
        radius = _arc_radius(width, inst.curvature)
        steps = max(2, int(math.ceil((u1 - u0) / (2.0 * q))))
        us = np.linspace(u0, u1, steps + 1)
        top = np.stack(_bend_point(us, np.full_like(us, v0), width, box_h, radius), axis=1)
        bottom = np.stack(_bend_point(us[::-1], np.full_like(us, v1), width, box_h, radius), axis=1)
        local = np.concatenate([top, bottom], axis=0)

    pix = _local_to_pixel(local, inst, width, box_h)
    poly = [(float(x), float(y)) for x, y in pix]
    if polygon_area(poly) < 0:
        poly.reverse()
    return poly


def polygon_area(poly) -> float:
    """Signed shoelace area; positive means counter-clockwise here."""
    total = 0.0
    for (x1, y1), (x2, y2) in zip(poly, poly[1:] + poly[:1]):
        total += x1 * y2 - x2 * y1
    return total / 2.0


def polygon_centroid(poly) -> tuple[float, float]:
    a = polygon_area(poly)
    if abs(a) < 1e-12:
        xs = [p[0] for p in poly]
        ys = [p[1] for p in poly]
        return (sum(xs) / len(poly), sum(ys) / len(poly))
    cx = cy = 0.0
    for (x1, y1), (x2, y2) in zip(poly, poly[1:] + poly[:1]):
        w = x1 * y2 - x2 * y1
        cx += (x1 + x2) * w
        cy += (y1 + y2) * w
    return (cx / (6.0 * a), cy / (6.0 * a))


def _lit_mask(inst: InstanceSpec, size: int) -> np.ndarray:
    """Boolean image of pixels whose center falls in a lit glyph cell."""
    q, width, box_h = _word_geometry(inst)
    n = len(inst.text)
    ys, xs = np.mgrid[0:size, 0:size].astype(float) + 0.5
    ax, ay = inst.anchor
    theta = math.radians(inst.rotation)
    c, s = math.cos(theta), math.sin(theta)
    dx = xs - ax
    dy = ys - ay
    lx = c * dx + s * dy + width / 2.0
    ly = -s * dx + c * dy + box_h / 2.0

    if inst.curvature >= 1e-9:
        radius = _arc_radius(width, inst.curvature)
        sagitta = _sagitta_from(radius, width)
        cx = width / 2.0
        cy = box_h + (radius - sagitta)
        ddx = lx - cx
        ddy = ly - cy
        rho = np.hypot(ddx, ddy)
        phi = np.arctan2(ddx, -ddy)
        u = cx + radius * phi
        v = box_h + radius - rho
    else:
        u, v = lx, ly

    adv = fonts.CHAR_ADVANCE * q
    ci = np.floor(u / adv).astype(int)
    cu = u - ci * adv
    col = np.floor(cu / q).astype(int)
    row = np.floor(v / q).astype(int)
    valid = ((ci >= 0) & (ci < n) & (col >= 0) & (col < fonts.GLYPH_COLS)
             & (row >= 0) & (row < fonts.GLYPH_ROWS))

    stack = np.stack([fonts.glyph(ch) for ch in inst.text])  # (n, 7, 5)
    lit = np.zeros((size, size), dtype=bool)
    sel = valid
    lit[sel] = stack[ci[sel], row[sel], col[sel]]
    return lit


def _poly_aabb(poly):
    xs = [p[0] for p in poly]
    ys = [p[1] for p in poly]
    return min(xs), min(ys), max(xs), max(ys)


def _aabbs_overlap(a, b) -> bool:
    return not (a[2] <= b[0] or b[2] <= a[0] or a[3] <= b[1] or b[3] <= a[1])


def _place_instances(spec: SampleSpec, rng: Rng) -> list[InstanceSpec]:
    """Resolve anchors: keep explicit ones, auto-place the rest.

    Auto-placement draws anchors until the instance polygon fits inside
    the image and its bounding box avoids the others; 100 failed draws
    raise PlacementError. Explicit anchors are validated the same way.
    """
    placed: list[InstanceSpec] = []
    boxes = []
    margin = 1.0
    for inst in spec.instances:
        if inst.anchor is not None:
            poly = instance_polygon(inst)
            box = _poly_aabb(poly)
            if (box[0] < 0 or box[1] < 0 or box[2] > spec.size or box[3] > spec.size
                    or any(_aabbs_overlap(box, other) for other in boxes)):
                raise PlacementError(
                    f"explicit anchor {inst.anchor} for {inst.text!r} overlaps or exits image")
            placed.append(inst)
            boxes.append(box)
            continue
        probe = InstanceSpec(inst.text, inst.height, inst.rotation,
                             inst.curvature, inst.contrast, (0.0, 0.0))
        base_poly = instance_polygon(probe)  # translation-equivariant in anchor
        bx0, by0, bx1, by1 = _poly_aabb(base_poly)
        half_w, half_h = (bx1 - bx0) / 2.0, (by1 - by0) / 2.0
        cx0, cy0 = (bx0 + bx1) / 2.0, (by0 + by1) / 2.0
        if (2 * (margin + half_w) > spec.size) or (2 * (margin + half_h) > spec.size):
            raise PlacementError(
                f"{inst.text!r} at height {inst.height} cannot fit a "
                f"{spec.size}px image")
        for _ in range(100):
            # draw where the polygon's bounding-box center should land
            bcx = rng.uniform(margin + half_w, spec.size - margin - half_w)
            bcy = rng.uniform(margin + half_h, spec.size - margin - half_h)
            box = (bcx - half_w, bcy - half_h, bcx + half_w, bcy + half_h)
            if any(_aabbs_overlap(box, other) for other in boxes):
                continue
            final = InstanceSpec(inst.text, inst.height, inst.rotation,
                                 inst.curvature, inst.contrast,
                                 (bcx - cx0, bcy - cy0))
            placed.append(final)
            boxes.append(box)
            break
        else:
            raise PlacementError(
                f"could not place {inst.text!r} after 100 attempts")
    return placed


def render_sample(spec: SampleSpec) -> tuple[Tensor, list[GtInstance]]:
    """Render one image and its ground-truth instances.

    Pixel values lie in [0, 1]: a noisy background plus, on glyph
    pixels, the instance contrast. Fully deterministic in spec.seed.
    """
    if not 1 <= len(spec.instances):
        raise ValueError("at least one instance required")
    rng = Rng(spec.seed)
    placed = _place_instances(spec, rng)

    img = np.full((spec.size, spec.size), spec.bg_level)
    img += spec.noise * rng.uniform(0.0, 1.0, (spec.size, spec.size))

    instances: list[GtInstance] = []
    for inst in placed:
        lit = _lit_mask(inst, spec.size)
        img[lit] += inst.contrast
        poly = instance_polygon(inst)
        instances.append(GtInstance(text=inst.text, polygon=poly,
                                    center=polygon_centroid(poly)))
    np.clip(img, 0.0, 1.0, out=img)
    return Tensor(img), instances


def difficulty_score(instances, spec: SampleSpec) -> float:
    """Scalar difficulty: scale-dominated mix of geometry and contrast.

    0.4*(8/mean height) + 0.2*(mean |rotation|/90) + 0.2*mean curvature
    + 0.1*(count-1) + 0.1*(1-mean contrast)
    """
    if not spec.instances:
        raise ValueError("difficulty_score needs at least one instance")
    insts = spec.instances
    mean_h = sum(i.height for i in insts) / len(insts)
    mean_rot = sum(abs(i.rotation) for i in insts) / len(insts)
    mean_curv = sum(i.curvature for i in insts) / len(insts)
    mean_con = sum(i.contrast for i in insts) / len(insts)
    return (0.4 * (8.0 / mean_h)
            + 0.2 * (mean_rot / 90.0)
            + 0.2 * mean_curv
            + 0.1 * (len(insts) - 1)
            + 0.1 * (1.0 - mean_con))


# ---------------------------------------------------------------------------
# dataset generation


def _fit_height(word: str, curvature: float, size: int,
                lo: float, hi: float, rng: Rng) -> float:
    # keep the rotated (and bulged, if curved) box diagonal inside the
    # image with margin, whatever rotation gets drawn next
    cols = fonts.CHAR_ADVANCE * len(word) - 1
    rows = fonts.GLYPH_ROWS + curvature * cols
    q_max = (size - 6.0) / math.hypot(cols, rows)
    cap = fonts.GLYPH_ROWS * q_max
    hi = min(hi, cap)
    lo = min(lo, hi)
    return rng.uniform(lo, hi)


def sample_spec(config: SynthConfig, seed: int) -> SampleSpec:
    """Draw one randomized SampleSpec from the config's ranges."""
    rng = Rng(derive_seed(seed, "spec"))
    count = config.min_instances + rng.randint(
        config.max_instances - config.min_instances + 1)
    instances = []
    for _ in range(count):
        word = normalize_text(rng.choice(config.vocab))
        curv = rng.uniform(*config.curvature_range)
        h = _fit_height(word, curv, config.size, *config.height_range, rng)
        instances.append(InstanceSpec(
            text=word,
            height=h,
            rotation=rng.uniform(*config.rotation_range),
            curvature=curv,
            contrast=rng.uniform(*config.contrast_range),
        ))
    return SampleSpec(size=config.size, instances=instances,
                      noise=config.noise, bg_level=config.bg_level,
                      seed=derive_seed(seed, "render"))


def save_png(path: Path | str, image: np.ndarray) -> None:
    """8-bit grayscale PNG from a [0,1] float image."""
    arr = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def load_png(path: Path | str) -> np.ndarray:
    """[0,1] float image from an 8-bit grayscale PNG."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def dataset_sample(config: SynthConfig, seed: int, index: int
                   ) -> tuple[SampleSpec, Tensor, list[GtInstance]]:
    """The sample `generate_dataset(config, seed, ...)` renders at `index`.

    Public so audits can regenerate any sample (and its difficulty)
    without touching the dataset files. Crowded draws that fail to
    place retry with a bumped seed, deterministically.
    """
    sseed = derive_seed(seed, index)
    for bump in range(10):
        try:
            spec = sample_spec(config, derive_seed(sseed, bump))
            image, instances = render_sample(spec)
            return spec, image, instances
        except PlacementError:
            continue
    raise PlacementError(f"sample {index}: placement kept failing")


def generate_dataset(config: SynthConfig, seed: int, out_dir: Path | str) -> Path:
    """Write images/, annotations.jsonl, gt.jsonl, and meta.json.

    annotations.jsonl carries transcriptions only (shuffled order, no
    geometry); gt.jsonl holds the evaluation polygons; meta.json records
    seed, config, and per-sample difficulty.
    """
    if config.count < 1:
        raise ValueError("count must be >= 1")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)

    ann_lines = []
    gt_lines = []
    difficulty = {}
    for i in range(config.count):
        image_id = f"{i:04d}"
        sseed = derive_seed(seed, i)
        spec, image, instances = dataset_sample(config, seed, i)

        save_png(out / "images" / f"{image_id}.png", image.data)

        texts = [inst.text for inst in instances]
        order_rng = Rng(derive_seed(sseed, "order"))
        order_rng.shuffle(texts)
        ann_lines.append(json.dumps({
            "image_id": image_id,
            "texts": texts,
            "source": "typed",
            "created_at": EPOCH_TS,
        }, sort_keys=True))
        gt_lines.append(json.dumps({
            "image_id": image_id,
            "instances": [{
                "text": inst.text,
                "polygon": [[x, y] for x, y in inst.polygon],
                "center": list(inst.center),
            } for inst in instances],
        }, sort_keys=True))
        difficulty[image_id] = difficulty_score(instances, spec)

    (out / "annotations.jsonl").write_text("\n".join(ann_lines) + "\n")
    (out / "gt.jsonl").write_text("\n".join(gt_lines) + "\n")
    (out / "meta.json").write_text(json.dumps({
        "seed": seed,
        "config": asdict(config),
        "difficulty": difficulty,
    }, sort_keys=True, indent=1) + "\n")
    return out
