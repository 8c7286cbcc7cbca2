"""The edit-operation algebra: scene-to-scene transforms plus sampling directives.

Four edit kinds exist. Appearance edits combine the target's appearance with
a reference object's; shape edits swap an object's mask while keeping its
appearance; additions append a new object; variations leave the scene alone
and only change the sampling seed. Every transform restores the panoptic
partition invariant or refuses with PartitionViolation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import rle
from .errors import (
    InvalidEditSpec,
    LayerMismatchError,
    PartitionViolation,
    UnknownObjectError,
)
from .representation import (
    AppearanceVector,
    ObjectStructure,
    SceneDescription,
    SceneObject,
    scene_from_objects,
)

EDIT_KINDS = ("appearance", "shape", "add", "variation")


@dataclass(frozen=True)
class GuidanceWeights:
    """Per-stream guidance strengths (structure, appearance, text)."""

    s_structure: float = 6.0
    s_appearance: float = 4.0
    s_text: float = 8.0

    def __post_init__(self):
        for name in ("s_structure", "s_appearance", "s_text"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")

    def to_json(self) -> dict:
        return {"sS": self.s_structure, "sF": self.s_appearance, "sy": self.s_text}

    @classmethod
    def from_json(cls, doc: dict) -> "GuidanceWeights":
        return cls(float(doc["sS"]), float(doc["sF"]), float(doc["sy"]))


def default_guidance(prompt_given: bool) -> GuidanceWeights:
    """Text-forward weights when a prompt drives the edit, image-forward otherwise."""
    if prompt_given:
        return GuidanceWeights(6.0, 4.0, 8.0)
    return GuidanceWeights(6.0, 4.0, 2.0)


UNCONDITIONAL_GUIDANCE = GuidanceWeights(6.0, 4.0, 0.0)


@dataclass(frozen=True, eq=False)
class EditSpec:
    """Serializable description of one edit.

    ``scene`` and ``ref.scene`` are opaque references (a path for the CLI, a
    stored id for the service); resolution happens at execution time.
    """

    kind: str
    target: int | None = None
    a0: float | None = None
    a1: float | None = None
    lam: float | None = None
    new_mask: np.ndarray | None = None
    category: int | None = None
    ref_scene: str | None = None
    ref_object: int | None = None
    seed: int = 0
    region_mask: np.ndarray | None = None
    guidance: GuidanceWeights | None = None
    prompt: str | None = None
    scene: str | None = None

    def validate(self) -> None:
        if self.kind not in EDIT_KINDS:
            raise InvalidEditSpec(f"unknown edit kind {self.kind!r}; expected one of {EDIT_KINDS}")
        if self.kind == "appearance":
            if self.target is None:
                raise InvalidEditSpec("appearance edit requires a target object id")
            if self.ref_scene is None or self.ref_object is None:
                raise InvalidEditSpec("appearance edit requires a reference (scene, object)")
            if self.lam is not None:
                if self.a0 is not None or self.a1 is not None:
                    raise InvalidEditSpec("give either lambda or (a0, a1), not both")
                if not 0.0 <= self.lam <= 1.0:
                    raise InvalidEditSpec(f"lambda must be in [0, 1], got {self.lam}")
            else:
                if self.a0 is None or self.a1 is None:
                    raise InvalidEditSpec("appearance edit requires (a0, a1) or lambda")
                if not (math.isfinite(self.a0) and math.isfinite(self.a1)):
                    raise InvalidEditSpec("a0 and a1 must be finite")
        elif self.kind == "shape":
            if self.target is None:
                raise InvalidEditSpec("shape edit requires a target object id")
            if self.new_mask is None or not np.asarray(self.new_mask, bool).any():
                raise InvalidEditSpec("shape edit requires a non-empty new mask")
        elif self.kind == "add":
            if self.new_mask is None or not np.asarray(self.new_mask, bool).any():
                raise InvalidEditSpec("add requires a non-empty new mask")
            if self.category is None:
                raise InvalidEditSpec("add requires a category id")
            if self.ref_scene is None or self.ref_object is None:
                raise InvalidEditSpec("add requires a reference (scene, object) appearance source")
        elif self.kind == "variation":
            if self.target is None:
                raise InvalidEditSpec("variation requires a target object id")

    def coefficients(self) -> tuple[float, float]:
        """Resolve (a0, a1), honoring lambda when present."""
        if self.lam is not None:
            return 1.0 - self.lam, self.lam
        return float(self.a0), float(self.a1)

    def to_json(self) -> dict:
        def mask_or_none(mask):
            return None if mask is None else rle.mask_to_json(mask)

        ref = None
        if self.ref_scene is not None or self.ref_object is not None:
            ref = {"scene": self.ref_scene, "object": self.ref_object}
        return {
            "kind": self.kind,
            "target": self.target,
            "a0": self.a0,
            "a1": self.a1,
            "lambda": self.lam,
            "new_mask_rle": mask_or_none(self.new_mask),
            "category": self.category,
            "ref": ref,
            "seed": self.seed,
            "region_mask_rle": mask_or_none(self.region_mask),
            "guidance": None if self.guidance is None else self.guidance.to_json(),
            "prompt": self.prompt,
            "scene": self.scene,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "EditSpec":
        def mask_or_none(entry):
            return None if entry is None else rle.mask_from_json(entry)

        ref = doc.get("ref") or {}
        guidance = doc.get("guidance")
        spec = cls(
            kind=doc.get("kind", ""),
            target=_opt_int(doc.get("target")),
            a0=_opt_float(doc.get("a0")),
            a1=_opt_float(doc.get("a1")),
            lam=_opt_float(doc.get("lambda")),
            new_mask=mask_or_none(doc.get("new_mask_rle")),
            category=_opt_int(doc.get("category")),
            ref_scene=ref.get("scene"),
            ref_object=_opt_int(ref.get("object")),
            seed=int(doc.get("seed", 0)),
            region_mask=mask_or_none(doc.get("region_mask_rle")),
            guidance=None if guidance is None else GuidanceWeights.from_json(guidance),
            prompt=doc.get("prompt"),
            scene=doc.get("scene"),
        )
        return spec


def _opt_int(v):
    return None if v is None else int(v)


def _opt_float(v):
    return None if v is None else float(v)


def _check_aligned(a: SceneObject, b: SceneObject) -> None:
    if a.slots() != b.slots():
        raise LayerMismatchError(
            f"appearance tuples not layer-aligned: {a.slots()} vs {b.slots()}"
        )


def edit_appearance(
    scene: SceneDescription,
    object_id: int,
    ref_scene: SceneDescription,
    ref_object_id: int,
    a0: float,
    a1: float,
) -> SceneDescription:
    """Replace the target's appearance with a0 * own + a1 * reference, layer-wise.

    Coefficients outside the interpolation simplex (a0 + a1 != 1) are allowed
    but extrapolate beyond the representations seen in training.
    """
    if not (math.isfinite(a0) and math.isfinite(a1)):
        raise InvalidEditSpec("appearance coefficients must be finite")
    target = scene.object(object_id)
    reference = ref_scene.object(ref_object_id)
    _check_aligned(target, reference)

    mixed = tuple(
        AppearanceVector(
            np.float32(a0) * own.values + np.float32(a1) * other.values,
            own.encoder_id,
            own.layer,
        )
        for own, other in zip(target.appearance, reference.appearance)
    )
    objects = list(scene.objects)
    objects[object_id] = SceneObject(target.structure, mixed)
    return replace(scene, objects=tuple(objects))


def interpolate_appearance(
    scene: SceneDescription,
    object_id: int,
    ref_scene: SceneDescription,
    ref_object_id: int,
    lam: float,
) -> SceneDescription:
    """Blend toward the reference appearance: lam=0 is identity, lam=1 is a swap."""
    if not 0.0 <= lam <= 1.0:
        raise InvalidEditSpec(f"lambda must be in [0, 1], got {lam}")
    return edit_appearance(scene, object_id, ref_scene, ref_object_id, 1.0 - lam, lam)


def _restore_partition(
    scene: SceneDescription,
    objects: list[SceneObject | None],
    claimed: np.ndarray,
    claimer_id: int,
    vacated: np.ndarray,
) -> SceneDescription:
    """Re-establish the partition after one object's mask changed.

    ``objects`` holds the provisional object list (None entries are placeholders
    about to be resolved), ``claimed`` is the claimer's new mask and ``vacated``
    the pixels it released. Other objects lose claimed pixels; vacated pixels go
    to the background object; emptied objects are dropped.
    """
    shape = claimed.shape
    if claimed.all() and len(objects) > 1:
        bg = _background_for(scene, exclude=claimer_id)
        if bg is None:
            raise PartitionViolation(
                "mask covers the whole image, other objects exist, and there is "
                "no background object to absorb them"
            )

    resolved: list[SceneObject | None] = []
    for i, obj in enumerate(objects):
        if i == claimer_id or obj is None:
            resolved.append(obj)
            continue
        new_mask = obj.structure.mask & ~claimed
        if not new_mask.any():
            resolved.append(None)
        else:
            resolved.append(
                SceneObject(ObjectStructure(obj.structure.category, new_mask), obj.appearance)
            )

    if vacated.any():
        bg = _background_for(scene, exclude=claimer_id)
        if bg is None or resolved[bg] is None:
            raise PartitionViolation(
                "pixels were vacated but the scene has no background object to absorb them"
            )
        bg_obj = resolved[bg]
        grown = bg_obj.structure.mask | (vacated & ~claimed)
        resolved[bg] = SceneObject(
            ObjectStructure(bg_obj.structure.category, grown), bg_obj.appearance
        )

    surviving = [obj for obj in resolved if obj is not None]
    return scene_from_objects(
        scene.image,
        surviving,
        caption=scene.caption,
        category_names=scene.category_names,
        background_category=scene.background_category,
    )


def _background_for(scene: SceneDescription, exclude: int) -> int | None:
    for i, obj in enumerate(scene.objects):
        if i != exclude and obj.structure.category == scene.background_category:
            return i
    return None


def edit_shape(scene: SceneDescription, object_id: int, new_mask: np.ndarray) -> SceneDescription:
    """Give the target object a new mask, keeping category and appearance.

    Pixels the new mask claims are removed from other objects; pixels it
    vacates fall back to the background object. Objects whose masks empty out
    are deleted and ids stay contiguous.
    """
    target = scene.object(object_id)
    new_mask = np.asarray(new_mask, dtype=bool)
    if new_mask.shape != target.structure.mask.shape:
        raise PartitionViolation(
            f"new mask shape {new_mask.shape} does not match scene {target.structure.mask.shape}"
        )
    if not new_mask.any():
        raise InvalidEditSpec("new mask must be non-empty")

    vacated = target.structure.mask & ~new_mask
    objects: list[SceneObject | None] = list(scene.objects)
    objects[object_id] = SceneObject(
        ObjectStructure(target.structure.category, new_mask), target.appearance
    )
    return _restore_partition(scene, objects, new_mask, object_id, vacated)


def add_object(
    scene: SceneDescription,
    new_mask: np.ndarray,
    category: int,
    appearance_source,
) -> SceneDescription:
    """Append a new object whose appearance comes from a tuple or a reference.

    ``appearance_source`` is either an ObjectAppearance tuple or a
    (ref_scene, ref_object_id) pair.
    """
    new_mask = np.asarray(new_mask, dtype=bool)
    if not new_mask.any():
        raise InvalidEditSpec("new mask must be non-empty")
    if isinstance(appearance_source, tuple) and len(appearance_source) == 2 and isinstance(
        appearance_source[0], SceneDescription
    ):
        ref_scene, ref_id = appearance_source
        appearance = ref_scene.object(ref_id).appearance
    else:
        appearance = tuple(appearance_source)
    if scene.objects:
        want = scene.objects[0].slots()
        got = tuple(v.slot() for v in appearance)
        if got != want:
            raise LayerMismatchError(f"appearance slots {got} do not match scene slots {want}")

    new_obj = SceneObject(ObjectStructure(int(category), new_mask), appearance)
    objects: list[SceneObject | None] = list(scene.objects) + [new_obj]
    vacated = np.zeros_like(new_mask)
    return _restore_partition(scene, objects, new_mask, len(objects) - 1, vacated)


def make_variation(
    scene: SceneDescription, object_id: int, seed: int
) -> tuple[SceneDescription, EditSpec]:
    """Resample directive: identical conditioning, fresh seed, region-limited."""
    obj = scene.object(object_id)
    spec = EditSpec(
        kind="variation",
        target=object_id,
        seed=int(seed),
        region_mask=obj.structure.mask.copy(),
    )
    return scene, spec


def apply_edit(
    spec: EditSpec,
    scene: SceneDescription,
    ref_scene: SceneDescription | None = None,
) -> SceneDescription:
    """Apply a validated EditSpec to a scene, resolving references."""
    spec.validate()
    if spec.kind == "appearance":
        if ref_scene is None:
            raise InvalidEditSpec("appearance edit needs the resolved reference scene")
        a0, a1 = spec.coefficients()
        return edit_appearance(scene, spec.target, ref_scene, spec.ref_object, a0, a1)
    if spec.kind == "shape":
        return edit_shape(scene, spec.target, spec.new_mask)
    if spec.kind == "add":
        if ref_scene is None:
            raise InvalidEditSpec("add needs the resolved reference scene")
        return add_object(scene, spec.new_mask, spec.category, (ref_scene, spec.ref_object))
    if spec.kind == "variation":
        edited, _ = make_variation(scene, spec.target, spec.seed)
        return edited
    raise UnknownObjectError(f"unreachable edit kind {spec.kind!r}")


def default_region(spec: EditSpec, scene: SceneDescription, edited: SceneDescription) -> np.ndarray | None:
    """Region mask implied by an edit when the spec leaves it unset.

    Appearance and variation edits touch the target's mask; shape edits touch
    the union of old and new masks; additions touch the new mask. An explicit
    region_mask on the spec wins.
    """
    if spec.region_mask is not None:
        return np.asarray(spec.region_mask, dtype=bool)
    if spec.kind in ("appearance", "variation"):
        return scene.object(spec.target).structure.mask.copy()
    if spec.kind == "shape":
        return scene.object(spec.target).structure.mask | np.asarray(spec.new_mask, bool)
    if spec.kind == "add":
        return np.asarray(spec.new_mask, dtype=bool).copy()
    return None
