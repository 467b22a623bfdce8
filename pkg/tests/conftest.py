import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conic_bench import LabeledInstanceGrid


def random_grid(rng: np.random.Generator, height: int, width: int,
                max_instances: int, mpp: float = 0.5) -> LabeledInstanceGrid:
    """Random rectangles painted in order; later ones overwrite earlier ones,
    so instances may shrink or vanish but never span two classes."""
    inst = np.zeros((height, width), dtype=np.int64)
    cls = np.zeros((height, width), dtype=np.int64)
    n = rng.integers(0, max_instances + 1)
    for label in range(1, n + 1):
        h = int(rng.integers(1, max(2, height // 2)))
        w = int(rng.integers(1, max(2, width // 2)))
        r = int(rng.integers(0, height - h + 1))
        c = int(rng.integers(0, width - w + 1))
        klass = int(rng.integers(1, 7))
        inst[r:r + h, c:c + w] = label
        cls[r:r + h, c:c + w] = klass
    return LabeledInstanceGrid(instance_labels=inst, class_labels=cls, mpp=mpp)


def perturbed_prediction(rng: np.random.Generator, gt: LabeledInstanceGrid) -> LabeledInstanceGrid:
    """A plausible prediction: shifted copies of gt instances with occasional
    class flips, dropped instances and spurious extras."""
    height, width = gt.instance_labels.shape
    inst = np.zeros_like(gt.instance_labels)
    cls = np.zeros_like(gt.class_labels)
    next_label = 1
    for label in np.unique(gt.instance_labels):
        if label == 0 or rng.random() < 0.2:
            continue
        rows, cols = np.nonzero(gt.instance_labels == label)
        dr = int(rng.integers(-2, 3))
        dc = int(rng.integers(-2, 3))
        rows = np.clip(rows + dr, 0, height - 1)
        cols = np.clip(cols + dc, 0, width - 1)
        klass = int(gt.class_labels[gt.instance_labels == label][0])
        if rng.random() < 0.15:
            klass = int(rng.integers(1, 7))
        inst[rows, cols] = next_label
        cls[rows, cols] = klass
        next_label += 1
    for _ in range(rng.integers(0, 3)):
        h = int(rng.integers(1, 4))
        w = int(rng.integers(1, 4))
        r = int(rng.integers(0, height - h + 1))
        c = int(rng.integers(0, width - w + 1))
        inst[r:r + h, c:c + w] = next_label
        cls[r:r + h, c:c + w] = int(rng.integers(1, 7))
        next_label += 1
    return LabeledInstanceGrid(instance_labels=inst, class_labels=cls, mpp=gt.mpp)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
