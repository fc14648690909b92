import numpy as np
import pytest

from mml.descriptors import (map_from_part_view, map_from_pixel_view, part_view, pixel_view)
from mml.errors import InvalidArgumentError


def _index_pixel(maps):
    maps = np.asarray(maps)
    m, c, h, w = maps.shape
    out = np.empty((c, m * h * w))
    for i in range(m):
        for ch in range(c):
            for y in range(h):
                for x in range(w):
                    out[ch, i * h * w + y * w + x] = maps[i, ch, y, x]
    return out


def _index_part(maps):
    maps = np.asarray(maps)
    m, c, h, w = maps.shape
    out = np.empty((h * w, m * c))
    for i in range(m):
        for ch in range(c):
            for y in range(h):
                for x in range(w):
                    out[y * w + x, i * c + ch] = maps[i, ch, y, x]
    return out


def test_small_map_views():
    a, b, c, d = 1.0, 2.0, 3.0, 4.0
    fm = np.array([[[a, b]], [[c, d]]])
    assert pixel_view(fm).T.tolist() == [[a, c], [b, d]]
    assert part_view(fm).T.tolist() == [[a, b], [c, d]]


def test_duplicate_shots_duplicate_columns():
    fm = np.random.default_rng(1).standard_normal((3, 2, 2))
    view = pixel_view([fm, fm])
    np.testing.assert_array_equal(view[:, :4], view[:, 4:])


def test_single_image_transpose_relation():
    fm = np.random.default_rng(2).standard_normal((4, 3, 3))
    np.testing.assert_array_equal(part_view(fm), pixel_view(fm).T)


@pytest.mark.parametrize("shape, m", [((3, 2, 2), 1), ((4, 3, 3), 1), ((5, 2, 3), 3)])
def test_views_match_index_oracle(shape, m):
    maps = np.random.default_rng(3).standard_normal((m, *shape))
    pix, part = pixel_view(maps), part_view(maps)
    np.testing.assert_array_equal(pix, _index_pixel(maps))
    np.testing.assert_array_equal(part, _index_part(maps))
    assert pix.shape[1] == m * shape[1] * shape[2]
    assert part.shape[1] == m * shape[0]
    np.testing.assert_array_equal(map_from_pixel_view(pix, shape), maps)
    np.testing.assert_array_equal(map_from_part_view(part, shape), maps)
    np.testing.assert_array_equal(pixel_view(maps), pix)


def test_shape_mismatch_rejected():
    with pytest.raises(InvalidArgumentError):
        pixel_view([np.zeros((2, 2, 2)), np.zeros((2, 3, 2))])
    with pytest.raises(InvalidArgumentError):
        part_view([])
