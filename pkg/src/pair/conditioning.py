"""Spatial conditioning tensors for the denoiser.

A scene is lowered to a 2-channel structure tensor (normalized category and
instance codes) plus one appearance tensor per encoder slot, where each
object's L2-normalized appearance vector is splatted across its mask and the
structure channels are concatenated. Any of the three streams (structure,
appearance, text) may be the explicit null marker, represented as ``None``
at the type level and as zeroed channels plus a presence flag numerically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LayerMismatchError, ShapeMismatchError
from .representation import SceneDescription

NORM_EPS = 1e-8

AUTO_CAPTION_TEMPLATE = "A picture of {category}"


@dataclass(frozen=True, eq=False)
class StructureTensor:
    """2 x H x W grid: channel 0 category code, channel 1 instance code."""

    values: np.ndarray
    num_categories: int
    num_instances: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3 or v.shape[0] != 2:
            raise ValueError(f"structure tensor must be 2 x H x W, got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def spatial(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]


@dataclass(frozen=True, eq=False)
class AppearanceTensor:
    """(C + 2) x H x W grid: splatted unit appearance plus structure channels."""

    values: np.ndarray
    encoder_id: str
    layer: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3 or v.shape[0] < 3:
            raise ValueError(f"appearance tensor must be (C+2) x H x W, got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def feature_channels(self) -> int:
        return self.values.shape[0] - 2

    @property
    def spatial(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]

    def appearance_part(self) -> np.ndarray:
        return self.values[:-2]

    def structure_part(self) -> np.ndarray:
        return self.values[-2:]


@dataclass(frozen=True, eq=False)
class ConditioningBundle:
    """The (S, F, y) triple; ``None`` is the explicit null marker for a stream.

    Appearance without structure is rejected: the sampler never evaluates
    that combination and training must not produce it.
    """

    structure: StructureTensor | None
    appearance: tuple[AppearanceTensor, ...] | None
    text: str | None

    def __post_init__(self):
        if self.appearance is not None and self.structure is None:
            raise ValueError("appearance conditioning requires structure conditioning")

    @property
    def has_structure(self) -> bool:
        return self.structure is not None

    @property
    def has_appearance(self) -> bool:
        return self.appearance is not None

    @property
    def has_text(self) -> bool:
        return self.text is not None


@dataclass(frozen=True)
class DropoutConfig:
    p_structure: float = 0.1
    p_appearance: float = 0.1
    p_text: float = 0.1

    def __post_init__(self):
        for name in ("p_structure", "p_appearance", "p_text"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")


def build_structure_tensor(scene: SceneDescription) -> StructureTensor:
    """Encode the panoptic partition as normalized float channels.

    Channel 0 holds category_id / (num_categories - 1) and channel 1 holds
    (instance_id + 1) / n, so both channels stay in [0, 1] and every object
    keeps a distinct instance code.
    """
    n_cat = scene.num_categories
    n_obj = scene.num_objects
    cat_denom = np.float32(max(n_cat - 1, 1))
    cat = scene.panoptic.category.astype(np.float32) / cat_denom
    inst = (scene.panoptic.instance.astype(np.float32) + 1.0) / np.float32(n_obj)
    return StructureTensor(np.stack([cat, inst]), num_categories=n_cat, num_instances=n_obj)


def decode_structure_tensor(tensor: StructureTensor) -> tuple[np.ndarray, np.ndarray]:
    """Invert build_structure_tensor back to integer category/instance grids."""
    cat_denom = max(tensor.num_categories - 1, 1)
    category = np.rint(tensor.values[0] * cat_denom).astype(np.int32)
    instance = np.rint(tensor.values[1] * tensor.num_instances - 1.0).astype(np.int32)
    return category, instance


def splat_appearance(scene: SceneDescription, encoder_id: str, layer: int) -> AppearanceTensor:
    """Broadcast each object's unit-normalized appearance vector over its mask.

    The structure tensor channels are concatenated below the appearance
    channels, matching the layout the denoiser consumes.
    """
    structure = build_structure_tensor(scene)
    h, w = structure.spatial

    channels = None
    out = None
    for obj in scene.objects:
        vec = None
        for v in obj.appearance:
            if v.slot() == (encoder_id, layer):
                vec = v
                break
        if vec is None:
            raise LayerMismatchError(
                f"object lacks appearance for slot ({encoder_id!r}, {layer}); "
                f"has {[v.slot() for v in obj.appearance]}"
            )
        if channels is None:
            channels = vec.channels
            out = np.zeros((channels, h, w), dtype=np.float32)
        elif vec.channels != channels:
            raise LayerMismatchError("appearance vectors disagree on channel count")
        v64 = vec.values.astype(np.float64)
        unit = (v64 / (np.linalg.norm(v64) + NORM_EPS)).astype(np.float32)
        out[:, obj.structure.mask] = unit[:, None]

    stacked = np.concatenate([out, structure.values], axis=0)
    return AppearanceTensor(stacked, encoder_id, layer)


def assemble_conditioning(scene: SceneDescription) -> ConditioningBundle:
    """Produce the full (S, F, y) bundle for a scene.

    Appearance tensors follow the scene's slot order. A scene without a
    caption gets the auto caption naming its largest object's category.
    """
    structure = build_structure_tensor(scene)
    slots = scene.objects[0].slots()
    for obj in scene.objects[1:]:
        if obj.slots() != slots:
            raise LayerMismatchError("objects disagree on appearance slots")
    appearance = tuple(splat_appearance(scene, eid, layer) for eid, layer in slots)
    if scene.caption is not None:
        text = scene.caption
    else:
        largest = scene.object(scene.largest_object_id())
        text = AUTO_CAPTION_TEMPLATE.format(
            category=scene.category_name(largest.structure.category)
        )
    return ConditioningBundle(structure=structure, appearance=appearance, text=text)


def apply_dropout(
    bundle: ConditioningBundle, cfg: DropoutConfig, rng: np.random.Generator
) -> ConditioningBundle:
    """Replace streams with their null markers at the configured rates.

    Structure dropping always drops appearance too. The appearance draw is
    conditioned on structure survival so the marginal null rate of each
    stream matches its configured probability (exactly attainable whenever
    p_appearance >= p_structure; otherwise the structure coupling floors it).
    """
    u_s, u_f, u_y = rng.random(3)
    drop_s = u_s < cfg.p_structure
    if cfg.p_structure >= 1.0:
        p_f_given_kept = 0.0
    else:
        p_f_given_kept = (cfg.p_appearance - cfg.p_structure) / (1.0 - cfg.p_structure)
    drop_f = drop_s or (u_f < p_f_given_kept)
    drop_y = u_y < cfg.p_text
    return ConditioningBundle(
        structure=None if drop_s else bundle.structure,
        appearance=None if drop_f else bundle.appearance,
        text=None if drop_y else bundle.text,
    )


@dataclass(frozen=True, eq=False)
class NumericConditioning:
    """Dense numeric form of a bundle, with presence flags for null markers.

    Null streams are all-zero channel blocks; the flags let the denoiser
    distinguish a dropped stream from genuinely zero features.
    """

    structure_channels: np.ndarray  # 2 x H x W
    structure_flag: float
    appearance_channels: tuple[np.ndarray, ...]  # (C_l + 2) x H x W each
    appearance_flag: float
    text: str
    text_flag: float


def encode_null_structure(height: int, width: int) -> tuple[np.ndarray, float]:
    return np.zeros((2, height, width), dtype=np.float32), 0.0


def encode_null_appearance(
    layer_channels: tuple[int, ...], height: int, width: int
) -> tuple[tuple[np.ndarray, ...], float]:
    blocks = tuple(
        np.zeros((c + 2, height, width), dtype=np.float32) for c in layer_channels
    )
    return blocks, 0.0


def encode_null_text() -> tuple[str, float]:
    return "", 0.0


def encode_bundle(
    bundle: ConditioningBundle,
    height: int,
    width: int,
    layer_channels: tuple[int, ...],
) -> NumericConditioning:
    """Lower a bundle to arrays the denoiser can consume.

    ``layer_channels`` gives the appearance channel count per slot so null
    appearance can be shaped without a live scene.
    """
    if bundle.structure is not None:
        s = bundle.structure.values
        if s.shape[1:] != (height, width):
            raise ShapeMismatchError("structure tensor does not match requested size")
        s_channels, s_flag = s, 1.0
    else:
        s_channels, s_flag = encode_null_structure(height, width)

    if bundle.appearance is not None:
        got = tuple(t.feature_channels for t in bundle.appearance)
        if got != tuple(layer_channels):
            raise ShapeMismatchError(
                f"appearance channels {got} do not match configured {tuple(layer_channels)}"
            )
        f_channels = tuple(t.values for t in bundle.appearance)
        f_flag = 1.0
    else:
        f_channels, f_flag = encode_null_appearance(tuple(layer_channels), height, width)

    if bundle.text is not None:
        text, y_flag = bundle.text, 1.0
    else:
        text, y_flag = encode_null_text()

    return NumericConditioning(
        structure_channels=s_channels,
        structure_flag=s_flag,
        appearance_channels=f_channels,
        appearance_flag=f_flag,
        text=text,
        text_flag=y_flag,
    )


def bundle_variant(
    bundle: ConditioningBundle,
    structure: bool,
    appearance: bool,
    text: bool,
) -> ConditioningBundle:
    """Project a bundle onto a subset of streams (for guidance evaluations)."""
    if appearance and not structure:
        raise ValueError("appearance conditioning requires structure conditioning")
    return ConditioningBundle(
        structure=bundle.structure if structure else None,
        appearance=bundle.appearance if appearance else None,
        text=bundle.text if text else None,
    )
