"""Run-length codec for binary masks.

Masks are flattened row-major and stored as alternating run lengths,
starting with the length of the initial zero run (which may be 0). The
canonical encoding of an all-zero mask is a single run covering every cell.
"""
from __future__ import annotations

import numpy as np


def rle_encode(mask: np.ndarray) -> list[int]:
    mask = np.asarray(mask, dtype=bool)
    flat = mask.ravel()
    if flat.size == 0:
        return []
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    boundaries = np.concatenate([[0], changes, [flat.size]])
    counts = np.diff(boundaries).tolist()
    if flat[0]:
        counts = [0] + counts
    return [int(c) for c in counts]


def rle_decode(counts: list[int], shape: tuple[int, int]) -> np.ndarray:
    total = int(shape[0]) * int(shape[1])
    if any(c < 0 for c in counts):
        raise ValueError("run lengths must be non-negative")
    if sum(counts) != total:
        raise ValueError(f"run lengths sum to {sum(counts)}, expected {total}")
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for count in counts:
        if value:
            flat[pos : pos + count] = True
        pos += count
        value = not value
    return flat.reshape(shape)


def mask_to_json(mask: np.ndarray) -> dict:
    mask = np.asarray(mask, dtype=bool)
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": rle_encode(mask)}


def mask_from_json(doc: dict) -> np.ndarray:
    size = doc["size"]
    return rle_decode([int(c) for c in doc["counts"]], (int(size[0]), int(size[1])))
