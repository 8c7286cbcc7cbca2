"""Scene JSON serialization.

Schema::

    {
      "image": path, "width": W, "height": H,
      "objects": [
        {"id": i, "category": c,
         "mask_rle": {"size": [H, W], "counts": [...]},
         "appearance": {"layers": [{"encoder": id, "layer": l, "values": [...]}]}}
      ],
      "caption": str | null,
      "category_names": [...]
    }

Appearance layer lists may be empty for structure-only scenes (e.g. dataset
ground truth before encoding); such scenes can be completed later with
``build_scene``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import rle
from .imageio import png_read
from .representation import (
    AppearanceVector,
    Image,
    ObjectStructure,
    PanopticMap,
    SceneDescription,
    SceneObject,
)

SCENE_FORMAT_VERSION = 1


def scene_to_json(scene: SceneDescription) -> dict:
    objects = []
    for i, obj in enumerate(scene.objects):
        layers = [
            {
                "encoder": v.encoder_id,
                "layer": int(v.layer),
                "values": [float(x) for x in v.values],
            }
            for v in obj.appearance
        ]
        objects.append(
            {
                "id": i,
                "category": int(obj.structure.category),
                "mask_rle": rle.mask_to_json(obj.structure.mask),
                "appearance": {"layers": layers},
            }
        )
    return {
        "format_version": SCENE_FORMAT_VERSION,
        "image": scene.image.source,
        "width": scene.image.width,
        "height": scene.image.height,
        "objects": objects,
        "caption": scene.caption,
        "category_names": list(scene.category_names),
        "background_category": scene.background_category,
    }


def scene_from_json(doc: dict, image: Image | None = None) -> SceneDescription:
    if image is None:
        if not doc.get("image"):
            raise ValueError("scene document has no image path and none was provided")
        image = png_read(doc["image"])
    height, width = int(doc["height"]), int(doc["width"])
    if (image.height, image.width) != (height, width):
        raise ValueError(
            f"image is {(image.height, image.width)}, scene says {(height, width)}"
        )

    objects = []
    instance = np.full((height, width), -1, dtype=np.int32)
    category = np.zeros((height, width), dtype=np.int32)
    for entry in sorted(doc["objects"], key=lambda o: int(o["id"])):
        mask = rle.mask_from_json(entry["mask_rle"])
        appearance = tuple(
            AppearanceVector(
                np.asarray(layer["values"], dtype=np.float32),
                layer["encoder"],
                int(layer["layer"]),
            )
            for layer in entry["appearance"]["layers"]
        )
        obj = SceneObject(ObjectStructure(int(entry["category"]), mask), appearance)
        instance[mask] = int(entry["id"])
        category[mask] = obj.structure.category
        objects.append(obj)

    pmap = PanopticMap(category, instance)
    return SceneDescription(
        image=image,
        panoptic=pmap,
        objects=tuple(objects),
        caption=doc.get("caption"),
        category_names=tuple(doc.get("category_names", ())),
        background_category=int(doc.get("background_category", 0)),
    )


def save_scene(scene: SceneDescription, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scene_to_json(scene), sort_keys=True), encoding="utf-8")


def load_scene(path: str | Path, image: Image | None = None) -> SceneDescription:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if image is None and doc.get("image"):
        image_path = Path(doc["image"])
        if not image_path.is_absolute():
            image_path = Path(path).parent / image_path
        image = png_read(image_path)
    return scene_from_json(doc, image=image)
