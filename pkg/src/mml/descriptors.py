"""Pixel-level and part-level views of convolutional feature maps.

A feature map is a ``(C, H, W)`` float array. Spatial positions are
enumerated row-major (``h`` outer, ``w`` inner), and when several maps are
pooled into one support class their descriptors are concatenated in the
order the maps are given.
"""

import numpy as np

from .errors import InvalidArgumentError


def as_feature_map(x):
    """Validate and return ``x`` as a float64 ``(C, H, W)`` array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise InvalidArgumentError(f"feature map must be (C, H, W), got shape {x.shape}")
    if min(x.shape) < 1:
        raise InvalidArgumentError(f"feature map dimensions must be >= 1, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("feature map contains non-finite values")
    return x


def stack_maps(maps):
    """Turn a single map or a sequence of maps into an ``(M, C, H, W)`` array."""
    if not isinstance(maps, np.ndarray):
        maps = list(maps)
        if not maps:
            raise InvalidArgumentError("at least one feature map is required")
        shapes = {np.shape(m) for m in maps}
        if len(shapes) != 1:
            raise InvalidArgumentError(f"feature maps have mismatched shapes: {sorted(shapes)}")
    arr = np.asarray(maps, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise InvalidArgumentError(f"expected (C, H, W) or (M, C, H, W) maps, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise InvalidArgumentError("at least one feature map is required")
    for m in arr:
        as_feature_map(m)
    return arr


def pixel_view(maps):
    """``C x (M*H*W)`` matrix whose columns are the channel fibers at each position."""
    arr = stack_maps(maps)
    m, c, h, w = arr.shape
    return np.ascontiguousarray(arr.reshape(m, c, h * w).transpose(1, 0, 2).reshape(c, m * h * w))


def part_view(maps):
    """``(H*W) x (M*C)`` matrix whose columns are the flattened channel planes."""
    arr = stack_maps(maps)
    m, c, h, w = arr.shape
    return np.ascontiguousarray(arr.reshape(m * c, h * w).T)


def map_from_pixel_view(view, shape):
    """Rebuild the ``(M, C, H, W)`` maps that produced a pixel view."""
    c, h, w = shape
    view = np.asarray(view)
    m = view.shape[1] // (h * w)
    return view.reshape(c, m, h * w).transpose(1, 0, 2).reshape(m, c, h, w)


def map_from_part_view(view, shape):
    """Rebuild the ``(M, C, H, W)`` maps that produced a part view."""
    c, h, w = shape
    view = np.asarray(view)
    m = view.shape[1] // c
    return view.T.reshape(m, c, h, w)
