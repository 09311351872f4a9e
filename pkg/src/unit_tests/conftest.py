import os
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pytest
import torch
from PIL import Image

from ..classes.configs import FotConfig, SyntheticSpec
from ..classes.element_types import SampleStage, SplitRole
from ..classes.image_sample import ImageSample, SampleRegistry
from ..classes.saliency import SaliencyMap
from ..classes.split import SplitConfig
from ..utils.counters import Counters

# class index -> RGB colour of the toy square objects
TOY_COLOURS = [
    (1.0, 0.0, 0.0),
    (0.0, 1.0, 0.0),
    (0.0, 0.0, 1.0),
    (1.0, 1.0, 0.0),
    (1.0, 0.0, 1.0),
    (0.0, 1.0, 1.0),
    (1.0, 0.5, 0.0),
    (0.5, 0.0, 1.0),
]


@pytest.fixture(autouse=True)
def reset_counters():
    Counters().reinit()
    yield


def write_png(path, array: np.ndarray):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    Image.fromarray(array).save(path)


def make_split(n_base: int, n_val: int, n_novel: int, prefix: str = "c") -> SplitConfig:
    names = tuple(f"{prefix}{i:02d}" for i in range(n_base + n_val + n_novel))
    return SplitConfig(
        class_names=names,
        base_classes=frozenset(range(n_base)),
        val_classes=frozenset(range(n_base, n_base + n_val)),
        novel_classes=frozenset(range(n_base + n_val, len(names))),
    )


def square_image(colour, size: int, top: int, left: int, side: int, background: float = 0.5) -> torch.Tensor:
    pixels = torch.full((3, size, size), background)
    for channel, value in enumerate(colour):
        pixels[channel, top : top + side, left : left + side] = value
    return pixels


def square_map(size: int, top: int, left: int, side: int) -> torch.Tensor:
    values = torch.zeros(1, size, size)
    values[:, top : top + side, left : left + side] = 1.0
    return values


def toy_samples(
    split: SplitConfig, per_class: int, size: int = 16, seed: int = 0
) -> Tuple[List[ImageSample], Dict[str, SaliencyMap]]:
    """
    One coloured square per image; the colour is the class, the square's
    position and side are nuisances. Maps are the exact square support.
    """
    rng = np.random.default_rng(seed)
    samples, maps = [], {}
    for class_id, name in enumerate(split.class_names):
        for index in range(per_class):
            side = int(rng.integers(size // 4, size // 2 + 1))
            top, left = (int(v) for v in rng.integers(0, size - side + 1, 2))
            sample = ImageSample(
                identifier=f"{name}/{index:03d}.png",
                class_id=class_id,
                split_role=split.role_of(class_id),
                pixels=square_image(TOY_COLOURS[class_id % len(TOY_COLOURS)], size, top, left, side),
                class_name=name,
            )
            samples.append(sample)
            maps[sample.identifier] = SaliencyMap(sample.identifier, square_map(size, top, left, side))
    return samples, maps


@pytest.fixture
def toy_split() -> SplitConfig:
    return make_split(4, 1, 3)


@pytest.fixture
def toy_data(toy_split):
    samples, maps = toy_samples(toy_split, per_class=6)
    return SampleRegistry.fromSamples(toy_split, samples), maps


@pytest.fixture
def fast_config(tmp_path) -> FotConfig:
    """A configuration small enough to run the whole pipeline in seconds."""
    return FotConfig(
        work_dir=str(tmp_path / "work"),
        results_file=str(tmp_path / "results.csv"),
        image_size=16,
        match_size=16,
        target_count=40,
        base_epochs=2,
        base_batch=8,
        gen_widths=(4, 8),
        gen_epochs=1,
        gen_batch=8,
        finetune_iters=6,
        original_only_iters=2,
        n_way=3,
        k_shot=1,
        n_query=2,
        n_episodes=3,
    )


@pytest.fixture(scope="session")
def synthetic_root(tmp_path_factory) -> str:
    from ..synthetic.shapes import gen_synthetic

    out = tmp_path_factory.mktemp("synthetic") / "shapes"
    spec = SyntheticSpec(n_classes=8, samples_per_class=6, image_size=32, clutter_shapes=3, seed=3)
    gen_synthetic(spec, str(out))
    return str(out)


def processed(sample: ImageSample, stage: SampleStage = SampleStage.FOREGROUND) -> ImageSample:
    return sample.withPixels(sample.pixels, stage)


def by_role(samples: Sequence[ImageSample], role: SplitRole) -> List[ImageSample]:
    return [sample for sample in samples if sample.split_role is role]
