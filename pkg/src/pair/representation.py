"""Object-level scene representation.

An image is decomposed into a partition of object instances. Each object
carries a structure (category id + binary mask) and an appearance: a tuple
of feature vectors obtained by masked average pooling of encoder feature
maps at increasing levels of abstraction.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import (
    EmptyMaskError,
    InvalidLayerError,
    PartitionViolation,
    ShapeMismatchError,
    UnknownBackendError,
)

MIN_SIDE = 8


@dataclass(frozen=True, eq=False)
class Image:
    """H x W x 3 pixel grid, float32 values in [0, 1]."""

    pixels: np.ndarray
    source: str | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected HxWx3 pixels, got shape {px.shape}")
        if px.shape[0] < MIN_SIDE or px.shape[1] < MIN_SIDE:
            raise ValueError(f"image sides must be >= {MIN_SIDE}, got {px.shape[:2]}")
        if not np.all(np.isfinite(px)):
            raise ValueError("pixel values must be finite")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True, eq=False)
class PanopticMap:
    """Per-pixel category and instance labels partitioning an image.

    Instance ids are contiguous 0..n-1 and the category is constant within
    each instance.
    """

    category: np.ndarray
    instance: np.ndarray

    def __post_init__(self):
        cat = np.asarray(self.category, dtype=np.int32)
        inst = np.asarray(self.instance, dtype=np.int32)
        if cat.shape != inst.shape or cat.ndim != 2:
            raise ValueError("category and instance grids must be equal 2-d shapes")
        ids = np.unique(inst)
        n = len(ids)
        if not np.array_equal(ids, np.arange(n)):
            raise PartitionViolation(f"instance ids must be contiguous 0..n-1, got {ids.tolist()}")
        for i in range(n):
            cats = np.unique(cat[inst == i])
            if len(cats) != 1:
                raise PartitionViolation(f"instance {i} spans categories {cats.tolist()}")
        object.__setattr__(self, "category", cat)
        object.__setattr__(self, "instance", inst)

    @property
    def num_instances(self) -> int:
        return int(self.instance.max()) + 1

    def instance_mask(self, instance_id: int) -> np.ndarray:
        return self.instance == instance_id

    def instance_category(self, instance_id: int) -> int:
        mask = self.instance_mask(instance_id)
        if not mask.any():
            raise PartitionViolation(f"instance {instance_id} has no pixels")
        return int(self.category[mask][0])


@dataclass(frozen=True, eq=False)
class ObjectStructure:
    category: int
    mask: np.ndarray  # H x W bool

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise ValueError("mask must be 2-d")
        if not mask.any():
            raise EmptyMaskError("object mask has no set pixels")
        object.__setattr__(self, "mask", mask)

    @property
    def area(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True, eq=False)
class FeatureMap:
    values: np.ndarray  # C x h x w
    encoder_id: str
    layer: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3:
            raise ValueError("feature map must be C x h x w")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def spatial(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]


@dataclass(frozen=True, eq=False)
class AppearanceVector:
    values: np.ndarray  # (C,)
    encoder_id: str
    layer: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 1:
            raise ValueError("appearance vector must be 1-d")
        if not np.all(np.isfinite(v)):
            raise ValueError("appearance values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    def slot(self) -> tuple[str, int]:
        return (self.encoder_id, self.layer)


ObjectAppearance = tuple  # tuple[AppearanceVector, ...], low to high abstraction


@dataclass(frozen=True, eq=False)
class SceneObject:
    structure: ObjectStructure
    appearance: ObjectAppearance

    def slots(self) -> tuple[tuple[str, int], ...]:
        return tuple(v.slot() for v in self.appearance)


@dataclass(frozen=True, eq=False)
class SceneDescription:
    """An image, its panoptic partition, and per-object (structure, appearance)."""

    image: Image
    panoptic: PanopticMap
    objects: tuple[SceneObject, ...]
    caption: str | None = None
    category_names: tuple[str, ...] = ()
    background_category: int = 0

    @property
    def num_objects(self) -> int:
        return len(self.objects)

    @property
    def num_categories(self) -> int:
        if self.category_names:
            return len(self.category_names)
        return int(max(obj.structure.category for obj in self.objects)) + 1

    def category_name(self, category_id: int) -> str:
        if 0 <= category_id < len(self.category_names):
            return self.category_names[category_id]
        return f"category_{category_id}"

    def object(self, object_id: int) -> SceneObject:
        from .errors import UnknownObjectError

        if not 0 <= object_id < len(self.objects):
            raise UnknownObjectError(f"no object with id {object_id} (scene has {len(self.objects)})")
        return self.objects[object_id]

    def background_id(self) -> int | None:
        """Lowest object id whose category is the background category, if any."""
        for i, obj in enumerate(self.objects):
            if obj.structure.category == self.background_category:
                return i
        return None

    def largest_object_id(self) -> int:
        areas = [obj.structure.area for obj in self.objects]
        return int(np.argmax(areas))


class FeatureEncoder(Protocol):
    """Deterministic image feature extractor with a fixed set of layers."""

    encoder_id: str

    @property
    def layers(self) -> tuple[int, ...]: ...

    def channels(self, layer: int) -> int: ...

    def extract(self, image: Image, layer: int) -> FeatureMap: ...


class SegmenterBackend(Protocol):
    backend_id: str

    def segment(self, image: Image) -> PanopticMap: ...


_SEGMENTERS: dict[str, SegmenterBackend] = {}


def register_segmenter(backend: SegmenterBackend) -> None:
    _SEGMENTERS[backend.backend_id] = backend


def get_segmenter(backend_id: str) -> SegmenterBackend:
    if backend_id not in _SEGMENTERS:
        raise UnknownBackendError(
            f"segmenter backend {backend_id!r} is not registered "
            f"(available: {sorted(_SEGMENTERS)})"
        )
    return _SEGMENTERS[backend_id]


class OracleSegmenter:
    """Segmenter that returns stored ground truth for known images.

    Ground truth is looked up either by the image's source path or by a
    fingerprint of its pixel contents. Dataset loaders register ground truth
    when samples are read from disk.
    """

    backend_id = "oracle"

    def __init__(self):
        self._by_source: dict[str, PanopticMap] = {}
        self._by_digest: dict[bytes, PanopticMap] = {}

    def register(self, image: Image, panoptic: PanopticMap) -> None:
        if image.source is not None:
            self._by_source[image.source] = panoptic
        self._by_digest[_pixel_digest(image)] = panoptic

    def segment(self, image: Image) -> PanopticMap:
        if image.source is not None and image.source in self._by_source:
            return self._by_source[image.source]
        digest = _pixel_digest(image)
        if digest in self._by_digest:
            return self._by_digest[digest]
        raise UnknownBackendError(
            "oracle segmenter has no ground truth for this image; "
            "register it or load the image through a dataset manifest"
        )


class ExternalSegmenter:
    """Adapter wrapping a user-supplied segmentation callable."""

    backend_id = "external"

    def __init__(self, fn: Callable[[Image], PanopticMap] | None = None):
        self._fn = fn

    def bind(self, fn: Callable[[Image], PanopticMap]) -> None:
        self._fn = fn

    def segment(self, image: Image) -> PanopticMap:
        if self._fn is None:
            raise UnknownBackendError("external segmenter has no bound callable")
        return self._fn(image)


def _pixel_digest(image: Image) -> bytes:
    import hashlib

    return hashlib.sha256(np.ascontiguousarray(image.pixels).tobytes()).digest()


_default_oracle = OracleSegmenter()
_default_external = ExternalSegmenter()
register_segmenter(_default_oracle)
register_segmenter(_default_external)


def default_oracle() -> OracleSegmenter:
    return _default_oracle


def segment(image: Image, backend: str | SegmenterBackend = "oracle") -> PanopticMap:
    """Run a registered segmentation backend and validate its output."""
    if isinstance(backend, str):
        backend = get_segmenter(backend)
    pmap = backend.segment(image)
    if pmap.instance.shape != (image.height, image.width):
        raise PartitionViolation(
            f"backend {backend.backend_id!r} returned grid {pmap.instance.shape}, "
            f"image is {(image.height, image.width)}"
        )
    return pmap


def extract_features(image: Image, encoder: FeatureEncoder, layer: int) -> FeatureMap:
    if layer not in encoder.layers:
        raise InvalidLayerError(
            f"layer {layer} not available on encoder {encoder.encoder_id!r} "
            f"(layers: {encoder.layers})"
        )
    fmap = encoder.extract(image, layer)
    h, w = fmap.spatial
    if h > image.height or w > image.width:
        raise InvalidLayerError("feature maps must not exceed image resolution")
    return fmap


def pool_appearance(features: FeatureMap, mask: np.ndarray) -> AppearanceVector:
    """Masked average pooling: per-channel mean of features over set cells."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != features.spatial:
        raise ShapeMismatchError(
            f"mask shape {mask.shape} does not match feature grid {features.spatial}"
        )
    count = mask.sum()
    if count == 0:
        raise EmptyMaskError("cannot pool appearance over an empty mask")
    # accumulate in float64: per-object means must recombine to the global
    # mean within 1e-6 even for large masks
    pooled = features.values[:, mask].astype(np.float64).sum(axis=1) / count
    return AppearanceVector(pooled.astype(np.float32), features.encoder_id, features.layer)


def downsample_mask(mask: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Center-aligned nearest-neighbor downsampling of a binary mask.

    A non-empty source that downsamples to nothing gets the cell containing
    its centroid set, so small objects never vanish at feature resolution.
    """
    mask = np.asarray(mask, dtype=bool)
    src_h, src_w = mask.shape
    h, w = target
    if h > src_h or w > src_w:
        raise ShapeMismatchError(f"target {target} exceeds source {mask.shape}")
    if (h, w) == (src_h, src_w):
        return mask.copy()
    rows = ((np.arange(h) + 0.5) * src_h / h).astype(np.int64)
    cols = ((np.arange(w) + 0.5) * src_w / w).astype(np.int64)
    out = mask[np.ix_(rows, cols)]
    if not out.any() and mask.any():
        rr, cc = np.nonzero(mask)
        cr = int(rr.mean() * h / src_h)
        cw = int(cc.mean() * w / src_w)
        out = out.copy()
        out[min(cr, h - 1), min(cw, w - 1)] = True
    return out


@dataclass(frozen=True)
class EncoderStack:
    """Ordered (encoder, layer) slots used to build appearance tuples.

    Slots go from low-level to high-level abstraction; objects built through
    one stack all share the same (encoder_id, layer) signature.
    """

    slots: tuple[tuple[FeatureEncoder, int], ...]

    @property
    def signature(self) -> tuple[tuple[str, int], ...]:
        return tuple((enc.encoder_id, layer) for enc, layer in self.slots)

    @property
    def layer_channels(self) -> tuple[int, ...]:
        return tuple(enc.channels(layer) for enc, layer in self.slots)

    def extract_all(self, image: Image) -> list[FeatureMap]:
        return [extract_features(image, enc, layer) for enc, layer in self.slots]

    def pool_object(self, feature_maps: Sequence[FeatureMap], mask: np.ndarray) -> ObjectAppearance:
        vectors = []
        for fmap in feature_maps:
            fmask = downsample_mask(mask, fmap.spatial)
            vectors.append(pool_appearance(fmap, fmask))
        return tuple(vectors)

    def object_appearance(self, image: Image, mask: np.ndarray) -> ObjectAppearance:
        return self.pool_object(self.extract_all(image), mask)


def build_scene(
    image: Image,
    pmap: PanopticMap,
    stack: EncoderStack,
    caption: str | None = None,
    category_names: tuple[str, ...] = (),
    background_category: int = 0,
) -> SceneDescription:
    """Assemble a SceneDescription from a panoptic partition.

    Object ids are assigned in raster order of each mask's first set pixel,
    which keeps serialization stable under input relabeling.
    """
    if pmap.instance.shape != (image.height, image.width):
        raise PartitionViolation("panoptic map does not match image size")
    n = pmap.num_instances
    feature_maps = stack.extract_all(image)

    order = sorted(
        range(n),
        key=lambda i: int(np.flatnonzero(pmap.instance_mask(i).ravel())[0]),
    )
    objects = []
    new_instance = np.empty_like(pmap.instance)
    for new_id, old_id in enumerate(order):
        mask = pmap.instance_mask(old_id)
        new_instance[mask] = new_id
        structure = ObjectStructure(pmap.instance_category(old_id), mask)
        appearance = stack.pool_object(feature_maps, mask)
        objects.append(SceneObject(structure, appearance))

    canonical = PanopticMap(pmap.category.copy(), new_instance)
    return SceneDescription(
        image=image,
        panoptic=canonical,
        objects=tuple(objects),
        caption=caption,
        category_names=category_names,
        background_category=background_category,
    )


def scene_from_objects(
    image: Image,
    objects: Sequence[SceneObject],
    caption: str | None = None,
    category_names: tuple[str, ...] = (),
    background_category: int = 0,
) -> SceneDescription:
    """Rebuild a scene from explicit objects, enforcing the partition invariant."""
    shape = (image.height, image.width)
    instance = np.full(shape, -1, dtype=np.int32)
    category = np.zeros(shape, dtype=np.int32)
    covered = np.zeros(shape, dtype=bool)
    for i, obj in enumerate(objects):
        mask = obj.structure.mask
        if mask.shape != shape:
            raise PartitionViolation(f"object {i} mask shape {mask.shape} != image {shape}")
        if (covered & mask).any():
            raise PartitionViolation(f"object {i} overlaps a previous mask")
        covered |= mask
        instance[mask] = i
        category[mask] = obj.structure.category
    if not covered.all():
        missing = int((~covered).sum())
        raise PartitionViolation(f"{missing} pixels belong to no object")
    pmap = PanopticMap(category, instance)
    return SceneDescription(
        image=image,
        panoptic=pmap,
        objects=tuple(objects),
        caption=caption,
        category_names=category_names,
        background_category=background_category,
    )


def with_caption(scene: SceneDescription, caption: str | None) -> SceneDescription:
    return replace(scene, caption=caption)
