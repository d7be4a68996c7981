"""
SOUP Patches Module
Patch extraction operators P_i, their adjoint and overlap counts
"""
from functools import lru_cache
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .exceptions import DimensionError, GeometryError
from .linalg import ArrayLike, as_complex_matrix


class PatchGeometry(BaseModel):
    """Square patches of side `patch_side` on an image_h x image_w grid.

    Patches are vectorized column-major; patch columns follow the row-major
    order of their top-left corners (0,0), (0,r), ...
    """

    model_config = ConfigDict(frozen=True)

    image_h: int = Field(ge=1)
    image_w: int = Field(ge=1)
    patch_side: int = Field(ge=1)
    stride: int = Field(default=1, ge=1)
    wrap: bool = True

    @model_validator(mode="after")
    def _patch_fits(self):
        if self.patch_side > min(self.image_h, self.image_w):
            raise GeometryError(
                f"patch side {self.patch_side} exceeds image size {self.image_h}x{self.image_w}"
            )
        return self

    @property
    def n(self) -> int:
        return self.patch_side * self.patch_side

    @property
    def num_pixels(self) -> int:
        return self.image_h * self.image_w

    def corner_rows(self) -> np.ndarray:
        last = self.image_h if self.wrap else self.image_h - self.patch_side + 1
        return np.arange(0, last, self.stride)

    def corner_cols(self) -> np.ndarray:
        last = self.image_w if self.wrap else self.image_w - self.patch_side + 1
        return np.arange(0, last, self.stride)

    @property
    def num_patches(self) -> int:
        return self.corner_rows().size * self.corner_cols().size


def _offsets(side: int):
    # column-major within the patch: row offset varies fastest
    cols, rows = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    return rows.ravel(), cols.ravel()


def patch_pixels(h: int, w: int, side: int, corners_r: np.ndarray, corners_c: np.ndarray) -> np.ndarray:
    """n x N flat (row-major) pixel indices of the patches at the given corners"""
    dr, dc = _offsets(side)
    rows = (corners_r[None, :] + dr[:, None]) % h
    cols = (corners_c[None, :] + dc[:, None]) % w
    return rows * w + cols


@lru_cache(maxsize=16)
def patch_index(geom: PatchGeometry) -> np.ndarray:
    r, c = np.meshgrid(geom.corner_rows(), geom.corner_cols(), indexing="ij")
    index = patch_pixels(geom.image_h, geom.image_w, geom.patch_side, r.ravel(), c.ravel())
    index.flags.writeable = False
    return index


def _check_image(y: np.ndarray, geom: PatchGeometry) -> np.ndarray:
    y = np.asarray(y, dtype=np.complex128)
    if y.shape != (geom.image_h, geom.image_w):
        raise DimensionError(f"image shape {y.shape} does not match geometry {geom.image_h}x{geom.image_w}")
    return y


def extract_patches(y: ArrayLike, geom: PatchGeometry) -> np.ndarray:
    """Y = [P_1 y, ..., P_N y]"""
    y = _check_image(y, geom)
    return y.ravel()[patch_index(geom)]


def aggregate_patches(X: ArrayLike, geom: PatchGeometry) -> np.ndarray:
    """sum_i P_i^T x_i"""
    X = as_complex_matrix(X)
    index = patch_index(geom)
    if X.shape != index.shape:
        raise DimensionError(f"patch matrix {X.shape} does not match geometry {index.shape}")
    flat = index.ravel()
    p = geom.num_pixels
    out = np.bincount(flat, weights=X.real.ravel(), minlength=p) \
        + 1j * np.bincount(flat, weights=X.imag.ravel(), minlength=p)
    return out.reshape(geom.image_h, geom.image_w)


def overlap_weights(geom: PatchGeometry) -> np.ndarray:
    """Diagonal of sum_i P_i^T P_i as an image"""
    counts = np.bincount(patch_index(geom).ravel(), minlength=geom.num_pixels)
    return counts.reshape(geom.image_h, geom.image_w).astype(np.float64)


def sample_patches(images: Sequence[ArrayLike], patch_side: int, count: int,
                   rng: np.random.Generator) -> np.ndarray:
    """`count` in-bounds patches at uniformly random positions of uniformly chosen images"""
    images = [np.asarray(im, dtype=np.complex128) for im in images]
    if not images:
        raise DimensionError("no images to sample from")
    for im in images:
        if im.ndim != 2 or patch_side > min(im.shape):
            raise GeometryError(f"patch side {patch_side} does not fit image of shape {im.shape}")
    which = rng.integers(len(images), size=count)
    out = np.empty((patch_side * patch_side, count), dtype=np.complex128)
    for k, im in enumerate(images):
        cols_k = np.flatnonzero(which == k)
        if not cols_k.size:
            continue
        h, w = im.shape
        r = rng.integers(h - patch_side + 1, size=cols_k.size)
        c = rng.integers(w - patch_side + 1, size=cols_k.size)
        out[:, cols_k] = im.ravel()[patch_pixels(h, w, patch_side, r, c)]
    return out
