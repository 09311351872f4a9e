import math
import os
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw

from ..classes.configs import FotConfig, SyntheticSpec
from ..datamodel.dataset import DatasetMngr
from ..logger.logger import Logger, LoggerManager
from ..utils.config_manager import ConfigMngr
from ..utils.file_manager import FilesMngr

Point = Tuple[float, float]


def _regular(n: int, start_deg: float = 90.0) -> List[Point]:
    start = math.radians(start_deg)
    return [(math.cos(start + 2 * math.pi * i / n), -math.sin(start + 2 * math.pi * i / n)) for i in range(n)]


def _star(points: int = 5, inner: float = 0.45) -> List[Point]:
    outer = _regular(2 * points)
    return [(x * (1.0 if i % 2 == 0 else inner), y * (1.0 if i % 2 == 0 else inner)) for i, (x, y) in enumerate(outer)]


_T = 1.0 / 3.0

# Unit outlines centred on the origin; posture scales, rotates and moves them.
SHAPES: Dict[str, List[Point]] = {
    "triangle": _regular(3),
    "square": _regular(4, 45.0),
    "pentagon": _regular(5),
    "hexagon": _regular(6),
    "star": _star(),
    "cross": [
        (-_T, 1), (_T, 1), (_T, _T), (1, _T), (1, -_T), (_T, -_T),
        (_T, -1), (-_T, -1), (-_T, -_T), (-1, -_T), (-1, _T), (-_T, _T),
    ],
    "arrow": [(0, -1), (0.7, -0.2), (0.3, -0.2), (0.3, 1), (-0.3, 1), (-0.3, -0.2), (-0.7, -0.2)],
    "disc": _regular(24),
}

COLOURS: Dict[str, Tuple[int, int, int]] = {
    "red": (220, 30, 30),
    "green": (30, 180, 40),
    "blue": (30, 60, 220),
    "yellow": (235, 210, 20),
    "magenta": (210, 40, 200),
    "cyan": (20, 200, 210),
    "orange": (245, 130, 20),
}

BACKDROPS: Sequence[Tuple[int, int, int]] = (
    (90, 90, 90),
    (140, 120, 100),
    (100, 120, 140),
    (60, 80, 60),
    (160, 160, 150),
)

# Posture radius per unit of scale, as a fraction of the image side.
RADIUS_FACTOR = 0.4
CLUTTER_RADIUS = (0.08, 0.16)


def class_signature(class_index: int) -> Tuple[str, str]:
    """
    (shape, colour) of a class. Consecutive classes change both shape and
    colour; the map is injective for the first len(SHAPES) * len(COLOURS) ids.
    """
    shape_names, colour_names = list(SHAPES), list(COLOURS)
    n_shapes = len(shape_names)
    shape = shape_names[class_index % n_shapes]
    colour = colour_names[(class_index + class_index // n_shapes) % len(colour_names)]
    return shape, colour


def class_name_of(class_index: int) -> str:
    shape, colour = class_signature(class_index)
    return f"{class_index:03d}_{colour}_{shape}"


def place(outline: Sequence[Point], centre: Point, radius: float, angle: float) -> List[Point]:
    cos, sin = math.cos(angle), math.sin(angle)
    return [
        (centre[0] + radius * (x * cos - y * sin), centre[1] + radius * (x * sin + y * cos))
        for x, y in outline
    ]


@dataclass(frozen=True)
class Posture:
    rotation: int
    scale: float
    offset_x: float
    offset_y: float


def draw_posture(spec: SyntheticSpec, rng: np.random.Generator) -> Posture:
    return Posture(
        rotation=int(rng.integers(spec.n_rotations)),
        scale=float(rng.choice(spec.scales)),
        offset_x=float(rng.choice(spec.offsets)),
        offset_y=float(rng.choice(spec.offsets)),
    )


def render_sample(
    spec: SyntheticSpec, class_index: int, posture: Posture, rng: np.random.Generator
) -> Tuple[Image.Image, Image.Image]:
    """
    Draws one image and its binary foreground mask. Clutter shapes come from
    the class vocabulary itself and sit under the object, so the mask covers
    exactly the visible object pixels.
    """
    size = spec.image_size
    image = Image.new("RGB", (size, size), BACKDROPS[int(rng.integers(len(BACKDROPS)))])
    mask = Image.new("L", (size, size), 0)
    draw, mask_draw = ImageDraw.Draw(image), ImageDraw.Draw(mask)
    shape_names, colour_names = list(SHAPES), list(COLOURS)

    for _ in range(spec.clutter_shapes):
        outline = SHAPES[shape_names[int(rng.integers(len(shape_names)))]]
        colour = COLOURS[colour_names[int(rng.integers(len(colour_names)))]]
        centre = (float(rng.uniform(0, size)), float(rng.uniform(0, size)))
        radius = float(rng.uniform(*CLUTTER_RADIUS)) * size
        angle = float(rng.uniform(0, 2 * math.pi))
        draw.polygon(place(outline, centre, radius, angle), fill=colour)

    shape, colour = class_signature(class_index)
    centre = (size / 2 + posture.offset_x * size, size / 2 + posture.offset_y * size)
    radius = posture.scale * RADIUS_FACTOR * size
    angle = 2 * math.pi * posture.rotation / spec.n_rotations
    polygon = place(SHAPES[shape], centre, radius, angle)
    draw.polygon(polygon, fill=COLOURS[colour])
    mask_draw.polygon(polygon, fill=255)
    return image, mask


@dataclass
class SyntheticDataset:
    image_dir: str
    saliency_dir: str
    split_file: str
    config_file: str
    class_names: List[str]
    n_images: int


class SyntheticShapesGenerator:
    """Writes the posed-shapes dataset together with its oracle saliency cache."""

    file_manager = FilesMngr()

    def __init__(self, spec: SyntheticSpec):
        self.spec = spec
        self.logger: Logger = LoggerManager().getLogger(self.__class__.__qualname__)

    def generate(self, out: str, force: bool = False) -> SyntheticDataset:
        """
        Layout: `out/images/<class>/<i>.png`, `out/saliency/<class>/<i>.png`,
        plus `out/split.txt` and a `out/fot.cfg` pointing at both trees.
        """
        spec = self.spec
        self.file_manager.prepare_output_directory(out, force)
        out = os.path.abspath(out)
        image_dir = os.path.join(out, "images")
        saliency_dir = os.path.join(out, "saliency")
        class_names = [class_name_of(index) for index in range(spec.n_classes)]

        for class_index, class_name in enumerate(class_names):
            for sample_index in range(spec.samples_per_class):
                rng = np.random.default_rng([spec.seed, class_index, sample_index])
                image, mask = render_sample(spec, class_index, draw_posture(spec, rng), rng)
                file_name = f"{sample_index:04d}.png"
                self.file_manager.save_pil_image(os.path.join(image_dir, class_name, file_name), image)
                self.file_manager.save_pil_image(os.path.join(saliency_dir, class_name, file_name), mask)

        datasets = DatasetMngr()
        counts = datasets.default_split_counts("synthetic", spec.n_classes)
        split_file = os.path.join(out, "split.txt")
        datasets.save_split(split_file, datasets.make_split(class_names, counts, spec.seed))

        config = FotConfig(
            data_dir=image_dir,
            saliency_dir=saliency_dir,
            split_file=split_file,
            dataset="synthetic",
            image_size=spec.image_size,
        )
        config_file = os.path.join(out, "fot.cfg")
        config_mngr = ConfigMngr()
        self.file_manager.write_lines(
            config_file,
            config_mngr.render(config, ["data_dir", "saliency_dir", "split_file", "dataset", "image_size"]),
        )
        n_images = spec.n_classes * spec.samples_per_class
        self.logger.info(
            f"Generated {n_images} images in {spec.n_classes} classes under '{out}' "
            f"(split {counts[0]}/{counts[1]}/{counts[2]})"
        )
        return SyntheticDataset(image_dir, saliency_dir, split_file, config_file, class_names, n_images)


def gen_synthetic(spec: SyntheticSpec, out: str, force: bool = False) -> SyntheticDataset:
    return SyntheticShapesGenerator(spec).generate(out, force)
