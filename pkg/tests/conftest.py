"""Shared helpers for building small test fixtures."""

import numpy as np

from vcbench import DescriptorSet, VideoId


def vid(raw: str) -> VideoId:
    return VideoId.parse(raw)


def dset(id_str: str, vectors, timestamps=None) -> DescriptorSet:
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim == 1:
        vectors = vectors[None, :]
    if timestamps is None:
        timestamps = np.arange(len(vectors), dtype=np.float64)
    return DescriptorSet(vid(id_str), np.asarray(timestamps, dtype=np.float64), vectors)


def unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    g = rng.standard_normal((n, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)
