import os

import pytest
import torch

from ..classes.configs import ExtractorConfig
from ..classes.element_types import EmptyMaskPolicy, SampleStage, SplitRole
from ..classes.image_sample import ImageSample
from ..classes.report import VariantFlags
from ..classes.saliency import BinaryMask, BoundingBox, SaliencyMap
from ..datamodel.dataset import DatasetMngr
from ..extractor.foreground import (
    ForegroundExtractor,
    apply_mask,
    extract_foreground,
    mask_bounding_box,
    prepare_sample,
    remove_background,
    stage_for,
    threshold_saliency,
    zoom_in,
)
from ..saliency.store import SaliencyMngr, SaliencyStore
from ..utils.counters import Counters, CounterTypes
from .conftest import square_image, square_map


def bits(rows):
    return BinaryMask(torch.tensor([rows], dtype=torch.bool))


def square_sample(size=12, top=2, left=3, side=4):
    pixels = square_image((1.0, 0.0, 0.0), size, top, left, side)
    sample = ImageSample("cls/a.png", 0, SplitRole.BASE, pixels=pixels, class_name="cls")
    return sample, SaliencyMap("cls/a.png", square_map(size, top, left, side))


# ---------------------------
# Tests for thresholding
# ---------------------------
class TestThreshold:
    def test_inclusive_at_beta(self):
        """
        A map value equal to beta / 255 counts as foreground
        """
        values = torch.tensor([[[39 / 255, 40 / 255, 41 / 255]]])
        mask = threshold_saliency(SaliencyMap("x", values), beta=40)
        assert mask.bits.tolist() == [[[False, True, True]]]

    def test_beta_zero_keeps_everything(self):
        mask = threshold_saliency(SaliencyMap("x", torch.zeros(1, 2, 2)), beta=0)
        assert bool(mask.bits.all())

    def test_beta_255_keeps_only_full_saliency(self):
        values = torch.tensor([[[1.0, 254 / 255]]])
        assert threshold_saliency(SaliencyMap("x", values), beta=255).bits.tolist() == [[[True, False]]]

    @pytest.mark.parametrize("beta", [-1, 256])
    def test_out_of_range(self, beta):
        with pytest.raises(ValueError, match=r"beta must lie in \[0, 255\]"):
            threshold_saliency(SaliencyMap("x", torch.zeros(1, 1, 1)), beta)


# ---------------------------
# Tests for masking and boxes
# ---------------------------
class TestMaskAndBox:
    def test_apply_mask_zeroes_every_channel(self):
        pixels = torch.ones(3, 2, 2)
        masked = apply_mask(pixels, bits([[True, False], [False, True]]))
        assert masked[:, 0, 1].tolist() == [0.0, 0.0, 0.0]
        assert masked[:, 1, 1].tolist() == [1.0, 1.0, 1.0]

    def test_apply_mask_size_mismatch(self):
        with pytest.raises(ValueError, match="does not match"):
            apply_mask(torch.ones(3, 3, 3), bits([[True]]))

    def test_tight_box(self):
        mask = bits(
            [
                [False, False, False, False],
                [False, True, False, False],
                [False, False, False, True],
            ]
        )
        assert mask_bounding_box(mask) == BoundingBox(top=1, left=1, height=2, width=3)

    def test_single_pixel(self):
        mask = bits([[False, False], [False, True]])
        assert mask_bounding_box(mask) == BoundingBox(1, 1, 1, 1)

    def test_empty_mask_whole_image(self):
        mask = bits([[False] * 5] * 3)
        assert mask_bounding_box(mask) == BoundingBox(0, 0, 3, 5)
        assert Counters().get(CounterTypes.EMPTY_MASKS) == 1

    def test_empty_mask_error_policy(self):
        with pytest.raises(ValueError, match="no salient region"):
            mask_bounding_box(bits([[False]]), EmptyMaskPolicy.ERROR)


# ---------------------------
# Tests for zoom_in
# ---------------------------
class TestZoomIn:
    def test_output_size(self):
        assert zoom_in(torch.rand(3, 5, 9), (8, 8)).shape == (3, 8, 8)
        assert zoom_in(torch.rand(3, 5, 9), (6, 10), pad_to_square=False).shape == (3, 6, 10)

    def test_pad_is_centred_and_black(self):
        """
        A 2 x 4 crop becomes a 4 x 4 square with one black row above and below
        """
        zoomed = zoom_in(torch.ones(1, 2, 4), (4, 4))
        assert zoomed[0, :, 0].tolist() == [0.0, 1.0, 1.0, 0.0]

    def test_identity_when_sizes_match(self):
        crop = torch.rand(3, 4, 4)
        assert torch.equal(zoom_in(crop, (4, 4)), crop)


# ---------------------------
# Tests for the extractor variants
# ---------------------------
class TestVariants:
    def test_foreground_fills_the_frame(self):
        """
        A saliency-exact square crop zooms to a frame holding only the object
        """
        sample, saliency_map = square_sample()
        result = extract_foreground(sample, saliency_map, ExtractorConfig(output_size=(8, 8)))
        assert result.stage is SampleStage.FOREGROUND
        assert result.pixels.shape == (3, 8, 8)
        assert torch.allclose(result.pixels[0], torch.ones(8, 8))
        assert torch.allclose(result.pixels[1:], torch.zeros(2, 8, 8))

    def test_background_removed_keeps_frame(self):
        sample, saliency_map = square_sample()
        result = remove_background(sample, saliency_map, ExtractorConfig(output_size=(12, 12)))
        assert result.stage is SampleStage.BACKGROUND_REMOVED
        expected = square_image((1.0, 0.0, 0.0), 12, 2, 3, 4, background=0.0)
        assert torch.allclose(result.pixels, expected)

    def test_empty_map_falls_back_to_whole_image(self):
        sample, _ = square_sample()
        empty = SaliencyMap(sample.identifier, torch.zeros(1, 12, 12))
        result = extract_foreground(sample, empty, ExtractorConfig(output_size=(12, 12)))
        assert torch.allclose(result.pixels, torch.zeros(3, 12, 12))

    @pytest.mark.parametrize(
        "flags, stage",
        [
            (VariantFlags(), SampleStage.RESIZED),
            (VariantFlags(remove_background=True), SampleStage.BACKGROUND_REMOVED),
            (VariantFlags(True, True), SampleStage.FOREGROUND),
        ],
    )
    def test_prepare_sample_routing(self, flags, stage):
        sample, saliency_map = square_sample()
        processed, carried = prepare_sample(sample, saliency_map, ExtractorConfig(output_size=(6, 6)), flags)
        assert processed.stage is stage is stage_for(flags)
        assert processed.pixels.shape == (3, 6, 6)
        assert carried.size == (6, 6)

    def test_baseline_without_map(self):
        sample, _ = square_sample()
        processed, carried = prepare_sample(sample, None, ExtractorConfig(output_size=(6, 6)), VariantFlags())
        assert carried is None
        assert processed.pixels.shape == (3, 6, 6)

    def test_removal_needs_map(self):
        sample, _ = square_sample()
        with pytest.raises(ValueError, match="needs a saliency map"):
            prepare_sample(sample, None, ExtractorConfig(), VariantFlags(remove_background=True))

    def test_carried_map_follows_geometry(self):
        """
        The map travels through the same crop, so it covers the whole output
        """
        sample, saliency_map = square_sample()
        _, carried = prepare_sample(sample, saliency_map, ExtractorConfig(output_size=(8, 8)), VariantFlags(True, True))
        assert torch.allclose(carried.values, torch.ones(1, 8, 8))


# ---------------------------
# Tests for ForegroundExtractor
# ---------------------------
class TestForegroundExtractor:
    def test_baseline_does_not_touch_saliency(self, mocker):
        sample, _ = square_sample()
        manager = SaliencyMngr(SaliencyStore())
        compute = mocker.spy(manager, "compute_saliency")
        extractor = ForegroundExtractor(ExtractorConfig(output_size=(6, 6)), manager, workers=1)
        processed, carried = extractor.process(sample, VariantFlags())
        compute.assert_not_called()
        assert carried is None and processed.stage is SampleStage.RESIZED

    def test_process_all_keeps_order(self, toy_data):
        registry, maps = toy_data
        store = SaliencyStore()
        for saliency_map in maps.values():
            store.write(saliency_map)
        extractor = ForegroundExtractor(ExtractorConfig(output_size=(8, 8)), SaliencyMngr(store), workers=3)
        samples = list(registry)[:10]
        results = extractor.process_all(samples, VariantFlags(True, True))
        assert [processed.source_id for processed, _ in results] == [s.identifier for s in samples]

    def test_write_processed_layout(self, toy_data, tmp_path):
        registry, maps = toy_data
        store = SaliencyStore()
        for saliency_map in maps.values():
            store.write(saliency_map)
        extractor = ForegroundExtractor(ExtractorConfig(output_size=(8, 8)), SaliencyMngr(store), workers=2)
        samples = registry.getSamplesOfClass(0)
        written = extractor.write_processed(
            samples, VariantFlags(True, True), str(tmp_path / "images"), str(tmp_path / "maps")
        )
        assert written == len(samples)
        assert sorted(os.listdir(tmp_path / "images" / "c00")) == [f"{i:03d}.png" for i in range(6)]
        assert sorted(os.listdir(tmp_path / "maps" / "c00")) == [f"{i:03d}.png" for i in range(6)]


def test_synthetic_oracle_blacks_out_background(synthetic_root):
    """
    With the rendered masks as saliency, everything off the object is zero
    """
    datasets = DatasetMngr()
    split = datasets.load_split(os.path.join(synthetic_root, "split.txt"))
    registry = datasets.load_dataset(os.path.join(synthetic_root, "images"), split)
    saliency = SaliencyMngr(SaliencyStore(os.path.join(synthetic_root, "saliency")))
    cfg = ExtractorConfig(output_size=(32, 32))
    for sample in list(registry)[:6]:
        saliency_map = saliency.compute_saliency(sample)
        processed = remove_background(sample, saliency_map, cfg)
        background = saliency_map.values[0] < 0.5
        assert torch.all(processed.pixels[:, background] == 0)
        assert torch.equal(processed.pixels[:, ~background], sample.pixels[:, ~background])


def reference_foreground(pixels, values, beta, output_size, pad_to_square):
    """Single-pass threshold, mask, crop, pad and resize written without the extractor helpers."""
    threshold = torch.tensor(beta / 255.0, dtype=values.dtype)
    keep = values.mean(dim=0) >= threshold
    masked = torch.where(keep, pixels, torch.zeros_like(pixels))
    rows = [i for i in range(keep.shape[0]) if bool(keep[i].any())]
    cols = [j for j in range(keep.shape[1]) if bool(keep[:, j].any())]
    if rows:
        masked = masked[:, rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    height, width = masked.shape[1:]
    if pad_to_square and height != width:
        side = max(height, width)
        canvas = torch.zeros(masked.shape[0], side, side, dtype=masked.dtype)
        top, left = (side - height) // 2, (side - width) // 2
        canvas[:, top : top + height, left : left + width] = masked
        masked = canvas
    if tuple(masked.shape[1:]) == tuple(output_size):
        return masked
    return torch.nn.functional.interpolate(
        masked.unsqueeze(0), size=tuple(output_size), mode="bilinear", align_corners=False
    )[0]


def random_blob_map(generator, height, width):
    """Uniform noise with a brighter random rectangle, so masks vary in extent."""
    values = torch.rand(1, height, width, generator=generator) * 0.5
    top = int(torch.randint(0, height, (1,), generator=generator))
    left = int(torch.randint(0, width, (1,), generator=generator))
    values[:, top : top + height // 2 + 1, left : left + width // 2 + 1] += 0.5
    return values.clamp(0.0, 1.0)


# ---------------------------
# Property checks of the extractor
# ---------------------------
class TestExtractorProperties:
    def test_matches_single_pass_reference(self):
        """
        extract_foreground is bit-exact with a one-shot composition on 100 random inputs
        """
        generator = torch.Generator().manual_seed(11)
        for index in range(100):
            height, width = (int(v) for v in torch.randint(3, 25, (2,), generator=generator))
            pixels = torch.rand(3, height, width, generator=generator)
            values = random_blob_map(generator, height, width)
            beta = float(torch.randint(0, 256, (1,), generator=generator))
            output_size = (int(torch.randint(4, 20, (1,), generator=generator)),) * 2
            if index % 3 == 0:
                output_size = (output_size[0], output_size[0] + 3)
            pad_to_square = index % 2 == 0
            cfg = ExtractorConfig(beta=beta, output_size=output_size, pad_to_square=pad_to_square)
            sample = ImageSample(f"c/{index}.png", 0, SplitRole.BASE, pixels=pixels)
            result = extract_foreground(sample, SaliencyMap(sample.identifier, values), cfg)
            expected = reference_foreground(pixels, values, beta, output_size, pad_to_square)
            assert torch.equal(result.pixels, expected), f"input {index} (beta={beta})"

    def test_threshold_monotonic_in_beta(self):
        """
        Raising beta never adds foreground pixels
        """
        generator = torch.Generator().manual_seed(5)
        for _ in range(1000):
            saliency_map = SaliencyMap("m", torch.rand(1, 6, 7, generator=generator))
            low, high = sorted(float(b) for b in torch.randint(0, 256, (2,), generator=generator))
            loose = threshold_saliency(saliency_map, low).bits
            strict = threshold_saliency(saliency_map, high).bits
            assert not bool((strict & ~loose).any())

    def test_masking_is_idempotent(self):
        generator = torch.Generator().manual_seed(6)
        for _ in range(50):
            pixels = torch.rand(3, 9, 9, generator=generator)
            mask = threshold_saliency(SaliencyMap("m", torch.rand(1, 9, 9, generator=generator)), 128)
            once = apply_mask(pixels, mask)
            assert torch.equal(apply_mask(once, mask), once)

    def test_bounding_box_is_minimal(self):
        """
        Every edge row and column of the box holds a set bit and nothing lies outside
        """
        generator = torch.Generator().manual_seed(7)
        for _ in range(200):
            mask = BinaryMask(torch.rand(1, 10, 12, generator=generator) > 0.93)
            if mask.is_empty():
                continue
            box = mask_bounding_box(mask)
            inside = box.crop(mask.bits[0])
            assert int(inside.sum()) == int(mask.bits.sum())
            assert bool(inside[0].any()) and bool(inside[-1].any())
            assert bool(inside[:, 0].any()) and bool(inside[:, -1].any())
