"""Synthetic shapes dataset with exact panoptic ground truth.

Scenes are 1-4 solid shapes (circle / square / triangle) over a colored
background on a small canvas, optionally textured with stripes or noise.
Colors come from a fixed 12-color palette with distinct hues and are unique
within a scene, so color-based oracles can identify objects unambiguously.
Captions name each object's color and kind.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rle
from .errors import PairError
from .imageio import png_read, png_write  # noqa: F401  (module API)
from .rle import rle_decode, rle_encode  # noqa: F401  (module API)
from .representation import (
    EncoderStack,
    Image,
    PanopticMap,
    SceneDescription,
    build_scene,
    default_oracle,
)

MANIFEST_VERSION = 1

CATEGORY_NAMES = ("background", "circle", "square", "triangle")

PALETTE = (
    ("red", (0.85, 0.10, 0.10)),
    ("orange", (0.95, 0.55, 0.10)),
    ("yellow", (0.90, 0.85, 0.10)),
    ("chartreuse", (0.55, 0.85, 0.10)),
    ("green", (0.10, 0.75, 0.20)),
    ("teal", (0.10, 0.80, 0.70)),
    ("cyan", (0.10, 0.75, 0.90)),
    ("blue", (0.15, 0.30, 0.90)),
    ("indigo", (0.35, 0.15, 0.85)),
    ("purple", (0.60, 0.15, 0.85)),
    ("magenta", (0.90, 0.15, 0.80)),
    ("rose", (0.95, 0.35, 0.55)),
)

PALETTE_NAMES = tuple(name for name, _ in PALETTE)
PALETTE_RGB = np.array([rgb for _, rgb in PALETTE], dtype=np.float32)

MIN_VISIBLE_PIXELS = 12


@dataclass(frozen=True)
class TextureSpec:
    kind: str  # "stripes" | "noise"
    amplitude: float
    frequency: float = 0.0
    axis: int = 0
    seed: int = 0


@dataclass(frozen=True)
class ShapeSpec:
    kind: str  # "circle" | "square" | "triangle"
    color_index: int
    center: tuple[int, int]
    size: int
    texture: TextureSpec | None = None


@dataclass(frozen=True)
class ShapesSceneSpec:
    canvas: tuple[int, int] = (32, 32)
    background_color_index: int = 0
    shapes: tuple[ShapeSpec, ...] = ()
    seed: int = 0


@dataclass(frozen=True)
class GeneratorConfig:
    canvas_size: int = 32
    min_objects: int = 1
    max_objects: int = 4
    texture_prob: float = 0.4
    val_fraction: float = 0.1

    def to_json(self) -> dict:
        return {
            "canvas_size": self.canvas_size,
            "min_objects": self.min_objects,
            "max_objects": self.max_objects,
            "texture_prob": self.texture_prob,
            "val_fraction": self.val_fraction,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GeneratorConfig":
        return cls(
            canvas_size=int(doc["canvas_size"]),
            min_objects=int(doc["min_objects"]),
            max_objects=int(doc["max_objects"]),
            texture_prob=float(doc["texture_prob"]),
            val_fraction=float(doc["val_fraction"]),
        )


def shape_mask(kind: str, center: tuple[int, int], size: int, canvas: tuple[int, int]) -> np.ndarray:
    h, w = canvas
    rr, cc = np.mgrid[0:h, 0:w]
    dr = rr - center[0]
    dc = cc - center[1]
    if kind == "circle":
        return dr**2 + dc**2 <= size**2
    if kind == "square":
        return (np.abs(dr) <= size) & (np.abs(dc) <= size)
    if kind == "triangle":
        # isoceles, apex up: width grows linearly from the apex row
        return (dr >= -size) & (dr <= size) & (np.abs(dc) * 2 <= dr + size)
    raise PairError(f"unknown shape kind {kind!r}")


def _apply_texture(pixels: np.ndarray, mask: np.ndarray, color: np.ndarray, tex: TextureSpec | None) -> None:
    base = np.broadcast_to(color, (int(mask.sum()), 3)).copy()
    if tex is not None:
        h, w = mask.shape
        rr, cc = np.nonzero(mask)
        if tex.kind == "stripes":
            coord = rr if tex.axis == 0 else cc
            extent = h if tex.axis == 0 else w
            factor = 1.0 + tex.amplitude * np.sin(2.0 * np.pi * tex.frequency * coord / extent)
        else:
            rng = np.random.default_rng(tex.seed)
            factor = 1.0 + tex.amplitude * (rng.random(len(rr)) * 2.0 - 1.0)
        base = base * factor[:, None]
    pixels[mask] = np.clip(base, 0.0, 1.0)


def render_scene(spec: ShapesSceneSpec) -> tuple[Image, PanopticMap, str, dict]:
    """Rasterize a scene spec; later shapes occlude earlier ones.

    Returns (image, panoptic map, caption, generator metadata). Fully
    occluded shapes are dropped so every instance keeps visible pixels.
    """
    h, w = spec.canvas
    owner = np.zeros((h, w), dtype=np.int32)  # 0 = background, k+1 = shapes[k]
    masks = []
    for k, shape in enumerate(spec.shapes):
        m = shape_mask(shape.kind, shape.center, shape.size, spec.canvas)
        masks.append(m)
        owner[m] = k + 1

    visible = [k for k in range(len(spec.shapes)) if (owner == k + 1).any()]
    pixels = np.empty((h, w, 3), dtype=np.float32)
    bg_mask = owner == 0
    _apply_texture(pixels, bg_mask, PALETTE_RGB[spec.background_color_index], None)

    instance = np.zeros((h, w), dtype=np.int32)
    category = np.zeros((h, w), dtype=np.int32)
    names = []
    colors = [spec.background_color_index]
    areas = [int(bg_mask.sum())]
    for new_id, k in enumerate(visible, start=1):
        shape = spec.shapes[k]
        region = owner == k + 1
        _apply_texture(pixels, region, PALETTE_RGB[shape.color_index], shape.texture)
        instance[region] = new_id
        category[region] = CATEGORY_NAMES.index(shape.kind)
        names.append(f"{PALETTE_NAMES[shape.color_index]} {shape.kind}")
        colors.append(shape.color_index)
        areas.append(int(region.sum()))

    names.append(f"{PALETTE_NAMES[spec.background_color_index]} background")
    caption = "A picture of " + " and ".join(names)
    meta = {
        "colors": colors,
        "areas": areas,
        "background_color": spec.background_color_index,
        "num_shapes": len(visible),
    }
    return Image(pixels), PanopticMap(category, instance), caption, meta


def sample_scene_spec(rng: np.random.Generator, cfg: GeneratorConfig, seed: int = 0) -> ShapesSceneSpec:
    size = cfg.canvas_size
    n = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
    color_picks = rng.choice(len(PALETTE), size=n + 1, replace=False)
    shapes = []
    for k in range(n):
        kind = ("circle", "square", "triangle")[int(rng.integers(0, 3))]
        extent = int(rng.integers(4, max(5, size // 4) + 1))
        center = (
            int(rng.integers(extent, size - extent)),
            int(rng.integers(extent, size - extent)),
        )
        texture = None
        if rng.random() < cfg.texture_prob:
            if rng.random() < 0.5:
                texture = TextureSpec(
                    kind="stripes",
                    amplitude=float(rng.uniform(0.1, 0.3)),
                    frequency=float(rng.uniform(1.0, 4.0)),
                    axis=int(rng.integers(0, 2)),
                )
            else:
                texture = TextureSpec(
                    kind="noise",
                    amplitude=float(rng.uniform(0.1, 0.25)),
                    seed=int(rng.integers(0, 2**31)),
                )
        shapes.append(
            ShapeSpec(
                kind=kind,
                color_index=int(color_picks[k + 1]),
                center=center,
                size=extent,
                texture=texture,
            )
        )
    return ShapesSceneSpec(
        canvas=(size, size),
        background_color_index=int(color_picks[0]),
        shapes=tuple(shapes),
        seed=seed,
    )


def generate_sample(seed_parts: tuple[int, int], cfg: GeneratorConfig):
    """Deterministically generate one sample from (dataset_seed, index)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed_parts))
    while True:
        spec = sample_scene_spec(rng, cfg, seed=seed_parts[1])
        image, pmap, caption, meta = render_scene(spec)
        counts = [int((pmap.instance == i).sum()) for i in range(pmap.num_instances)]
        if all(c >= MIN_VISIBLE_PIXELS for c in counts[1:]) and meta["num_shapes"] >= cfg.min_objects:
            return image, pmap, caption, meta


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    count: int
    seed: int
    config: GeneratorConfig
    train_indices: tuple[int, ...]
    val_indices: tuple[int, ...]

    def image_path(self, index: int) -> Path:
        return self.root / "images" / f"{index:05d}.png"

    def scene_path(self, index: int) -> Path:
        return self.root / "scenes" / f"{index:05d}.json"


def generate_dataset(cfg: GeneratorConfig, n: int, out_dir: str | Path, seed: int = 0) -> DatasetManifest:
    """Write n PNG + ground-truth scene JSON pairs and a manifest."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    if n > 0:
        (root / "images").mkdir(exist_ok=True)
        (root / "scenes").mkdir(exist_ok=True)

    for idx in range(n):
        image, pmap, caption, meta = generate_sample((seed, idx), cfg)
        png_write(image, root / "images" / f"{idx:05d}.png")
        objects = []
        for i in range(pmap.num_instances):
            mask = pmap.instance_mask(i)
            objects.append(
                {
                    "id": i,
                    "category": pmap.instance_category(i),
                    "mask_rle": rle.mask_to_json(mask),
                    "appearance": {"layers": []},
                }
            )
        doc = {
            "format_version": MANIFEST_VERSION,
            "image": f"images/{idx:05d}.png",
            "width": image.width,
            "height": image.height,
            "objects": objects,
            "caption": caption,
            "category_names": list(CATEGORY_NAMES),
            "background_category": 0,
            "generator": meta,
        }
        (root / "scenes" / f"{idx:05d}.json").write_text(
            json.dumps(doc, sort_keys=True), encoding="utf-8"
        )

    n_val = int(round(n * cfg.val_fraction))
    train = tuple(range(0, n - n_val))
    val = tuple(range(n - n_val, n))
    manifest_doc = {
        "format_version": MANIFEST_VERSION,
        "count": n,
        "seed": seed,
        "generator": cfg.to_json(),
        "splits": {"train": list(train), "val": list(val)},
        "category_names": list(CATEGORY_NAMES),
        "palette": [{"name": name, "rgb": list(rgb)} for name, rgb in PALETTE],
    }
    (root / "manifest.json").write_text(json.dumps(manifest_doc, sort_keys=True), encoding="utf-8")
    return DatasetManifest(
        root=root, count=n, seed=seed, config=cfg, train_indices=train, val_indices=val
    )


def load_manifest(root: str | Path) -> DatasetManifest:
    root = Path(root)
    doc = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    if doc.get("format_version") != MANIFEST_VERSION:
        raise PairError(f"unsupported manifest version {doc.get('format_version')}")
    count = int(doc["count"])
    on_disk = len(list((root / "images").glob("*.png"))) if count else 0
    if on_disk != count:
        raise PairError(f"manifest says {count} samples but {on_disk} images exist")
    return DatasetManifest(
        root=root,
        count=count,
        seed=int(doc["seed"]),
        config=GeneratorConfig.from_json(doc["generator"]),
        train_indices=tuple(doc["splits"]["train"]),
        val_indices=tuple(doc["splits"]["val"]),
    )


def load_sample(manifest: DatasetManifest, index: int) -> tuple[Image, PanopticMap, str]:
    """Read one sample; registers its ground truth with the oracle segmenter."""
    if not 0 <= index < manifest.count:
        raise PairError(f"sample index {index} out of range [0, {manifest.count})")
    image = png_read(manifest.image_path(index))
    doc = json.loads(manifest.scene_path(index).read_text(encoding="utf-8"))
    h, w = int(doc["height"]), int(doc["width"])
    instance = np.full((h, w), -1, dtype=np.int32)
    category = np.zeros((h, w), dtype=np.int32)
    for entry in doc["objects"]:
        mask = rle.mask_from_json(entry["mask_rle"])
        instance[mask] = int(entry["id"])
        category[mask] = int(entry["category"])
    pmap = PanopticMap(category, instance)
    default_oracle().register(image, pmap)
    return image, pmap, doc["caption"]


def load_generator_meta(manifest: DatasetManifest, index: int) -> dict:
    doc = json.loads(manifest.scene_path(index).read_text(encoding="utf-8"))
    return doc.get("generator", {})


def load_training_scene(
    manifest: DatasetManifest, index: int, stack: EncoderStack
) -> tuple[Image, SceneDescription]:
    """Load a sample and build its full scene (appearance included)."""
    image, pmap, caption = load_sample(manifest, index)
    scene = build_scene(
        image,
        pmap,
        stack,
        caption=caption,
        category_names=CATEGORY_NAMES,
        background_category=0,
    )
    return image, scene


def build_vocab() -> tuple[str, ...]:
    """Caption vocabulary: color and category unigrams plus color-category
    bigrams.

    Bigrams keep the color-to-object binding that a plain bag of words
    destroys ("red circle and teal background" fires red_circle and
    teal_background), and template filler words are excluded so they cannot
    dilute the embedding.
    """
    unigrams = list(PALETTE_NAMES) + list(CATEGORY_NAMES)
    bigrams = [
        f"{color}_{category}"
        for color in PALETTE_NAMES
        for category in CATEGORY_NAMES
    ]
    return tuple(unigrams + bigrams)
