from __future__ import annotations

import numpy as np
import pytest

from alpr.geometry import BBox
from alpr.imaging import ImageBuf


def make_image(width: int, height: int, channels: int = 3, seed: int = 0) -> ImageBuf:
    rng = np.random.default_rng(seed)
    return ImageBuf(rng.integers(0, 256, size=(height, width, channels), dtype=np.uint8))


def random_box(rng: np.random.Generator, classes: int = 3) -> BBox:
    w = float(rng.uniform(0.05, 0.5))
    h = float(rng.uniform(0.05, 0.5))
    return BBox(
        cx=float(rng.uniform(w / 2, 1 - w / 2)),
        cy=float(rng.uniform(h / 2, 1 - h / 2)),
        w=w,
        h=h,
        class_id=int(rng.integers(0, classes)),
        score=float(rng.uniform(0.0, 1.0)),
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260809)
