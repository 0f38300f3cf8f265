"""Binary mask cleanup: keep the largest component, then fill holes.

Foreground components use 26-connectivity, background fill 6-connectivity
(the standard dual pairing).
"""

from __future__ import annotations

import numpy as np

from . import kernels


def largest_component(mask: np.ndarray, connectivity: int = 26) -> np.ndarray:
    """Keep only the largest foreground component (ties: first in raster order)."""
    mask = np.asarray(mask) != 0
    labels, count = kernels.label_components(mask.astype(np.uint8), connectivity)
    if count == 0:
        return np.zeros(mask.shape, dtype=np.uint8)
    sizes = np.bincount(labels.ravel(), minlength=count + 1)[1:]
    winner = int(np.argmax(sizes)) + 1
    return (labels == winner).astype(np.uint8)


def fill_holes(mask: np.ndarray) -> np.ndarray:
    """Fill background cavities not 6-connected to the volume border."""
    mask = np.asarray(mask) != 0
    background = (~mask).astype(np.uint8)
    labels, count = kernels.label_components(background, 6)
    if count == 0:
        return mask.astype(np.uint8)
    border_labels = np.zeros(count + 1, dtype=bool)
    for axis in range(3):
        for face in (0, -1):
            sel = [slice(None)] * 3
            sel[axis] = face
            border_labels[np.unique(labels[tuple(sel)])] = True
    border_labels[0] = False
    enclosed = (labels > 0) & ~border_labels[labels]
    return (mask | enclosed).astype(np.uint8)


def cleanup(mask: np.ndarray) -> np.ndarray:
    return fill_holes(largest_component(mask))
