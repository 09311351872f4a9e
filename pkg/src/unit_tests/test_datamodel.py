import numpy as np
import pytest
import torch

from ..classes.element_types import SampleStage, SplitRole
from ..classes.errors import ConfigError, DatasetError
from ..classes.image_sample import ImageSample, SampleRegistry
from ..classes.split import SplitConfig
from ..datamodel.dataset import DatasetMngr
from ..datamodel.episodes import sample_episode
from ..utils.counters import Counters, CounterTypes
from .conftest import make_split, toy_samples, write_png


@pytest.fixture
def dataset_manager():
    return DatasetMngr()


def image_tree(root, classes, per_class=3, size=8):
    for class_index, name in enumerate(classes):
        for index in range(per_class):
            array = np.full((size, size, 3), 10 * class_index + index, dtype=np.uint8)
            write_png(str(root / name / f"{index}.png"), array)


# ---------------------------
# Tests for SplitConfig
# ---------------------------
class TestSplitConfig:
    def test_roles(self):
        split = make_split(2, 1, 1)
        assert [split.role_of(i) for i in range(4)] == [
            SplitRole.BASE,
            SplitRole.BASE,
            SplitRole.VAL,
            SplitRole.NOVEL,
        ]
        assert split.counts == (2, 1, 1)
        assert split.class_id("c02") == 2

    def test_overlap(self):
        with pytest.raises(ConfigError, match="assigned to both"):
            SplitConfig(("a", "b"), frozenset({0, 1}), frozenset({1}), frozenset())

    def test_unassigned(self):
        with pytest.raises(ConfigError, match="unassigned class 'b'"):
            SplitConfig(("a", "b"), frozenset({0}), frozenset(), frozenset())

    def test_unsorted_names(self):
        with pytest.raises(ConfigError, match="lexicographic"):
            SplitConfig(("b", "a"), frozenset({0}), frozenset({1}), frozenset())

    def test_unknown_name(self):
        with pytest.raises(ConfigError, match="unassigned class 'zz'"):
            make_split(1, 1, 1).class_id("zz")


# ---------------------------
# Tests for split construction and files
# ---------------------------
class TestSplits:
    def test_make_split_is_seeded(self, dataset_manager):
        names = [f"n{i}" for i in range(10)]
        first = dataset_manager.make_split(names, (6, 2, 2), seed=1)
        assert first == dataset_manager.make_split(list(reversed(names)), (6, 2, 2), seed=1)
        assert first.counts == (6, 2, 2)
        assert first.class_names == tuple(sorted(names))

    def test_make_split_count_mismatch(self, dataset_manager):
        with pytest.raises(ConfigError, match="do not match 3 classes"):
            dataset_manager.make_split(["a", "b", "c"], (1, 1, 2), seed=0)

    @pytest.mark.parametrize(
        "dataset, n_classes, expected",
        [
            ("CUB", 200, (120, 30, 50)),
            ("mini-ImageNet", 100, (64, 16, 20)),
            ("synthetic", 20, (12, 3, 5)),
            ("custom", 8, (2, 1, 5)),
        ],
    )
    def test_default_counts(self, dataset_manager, dataset, n_classes, expected):
        assert dataset_manager.default_split_counts(dataset, n_classes) == expected

    def test_benchmark_with_wrong_class_count(self, dataset_manager):
        with pytest.raises(ConfigError, match="expects 200 classes"):
            dataset_manager.default_split_counts("cub", 150)

    def test_too_few_classes(self, dataset_manager):
        with pytest.raises(ConfigError, match="too few"):
            dataset_manager.default_split_counts("custom", 5)

    def test_save_and_load(self, dataset_manager, tmp_path):
        split = dataset_manager.make_split([f"n{i}" for i in range(7)], (4, 1, 2), seed=5)
        path = tmp_path / "split.txt"
        dataset_manager.save_split(str(path), split)
        assert dataset_manager.load_split(str(path)) == split

    def test_names_with_commas(self, dataset_manager, tmp_path):
        """
        Class names holding commas or quotes are quoted on write and survive a reload
        """
        names = ["001.Black_footed_Albatross", "Heermann's, Gull", "say \"hi\""]
        split = dataset_manager.make_split(names, (1, 1, 1), seed=0)
        path = tmp_path / "split.txt"
        dataset_manager.save_split(str(path), split)
        assert "\"Heermann's, Gull\"" in path.read_text()
        assert dataset_manager.load_split(str(path)) == split

    def test_load_bad_role(self, dataset_manager, tmp_path):
        path = tmp_path / "split.txt"
        path.write_text("a,base\nb,test\n")
        with pytest.raises(ConfigError, match="Unknown split role"):
            dataset_manager.load_split(str(path))

    def test_load_malformed_line(self, dataset_manager, tmp_path):
        path = tmp_path / "split.txt"
        path.write_text("a base\n")
        with pytest.raises(ConfigError, match="Malformed split line"):
            dataset_manager.load_split(str(path))


# ---------------------------
# Tests for load_dataset
# ---------------------------
class TestLoadDataset:
    def test_registers_samples_in_order(self, dataset_manager, tmp_path):
        image_tree(tmp_path, ["b", "a", "c"])
        split = SplitConfig(("a", "b", "c"), frozenset({0, 1}), frozenset(), frozenset({2}))
        registry = dataset_manager.load_dataset(str(tmp_path), split)
        assert registry.frozen
        assert registry.identifiers()[:4] == ["a/0.png", "a/1.png", "a/2.png", "b/0.png"]
        assert len(registry.getSamplesOfRole(SplitRole.NOVEL)) == 3
        sample = registry.getElement("b/2.png")
        assert sample.class_id == 1 and sample.split_role is SplitRole.BASE
        assert sample.size == (8, 8)
        assert torch.allclose(sample.pixels, torch.full((3, 8, 8), 2 / 255))

    def test_corrupt_image_is_skipped(self, dataset_manager, tmp_path):
        image_tree(tmp_path, ["a", "b"], per_class=2)
        (tmp_path / "a" / "broken.png").write_bytes(b"garbage")
        split = SplitConfig(("a", "b"), frozenset({0}), frozenset(), frozenset({1}))
        registry = dataset_manager.load_dataset(str(tmp_path), split)
        assert len(registry) == 4
        assert registry.skipped == 1
        assert "a/broken.png" not in registry
        assert Counters().get(CounterTypes.SKIPPED_IMAGES) == 1

    def test_directory_outside_split(self, dataset_manager, tmp_path):
        image_tree(tmp_path, ["a", "stray"], per_class=1)
        split = SplitConfig(("a",), frozenset({0}), frozenset(), frozenset())
        with pytest.raises(ConfigError, match="unassigned class 'stray'"):
            dataset_manager.load_dataset(str(tmp_path), split)

    def test_missing_class_directory_warns(self, dataset_manager, tmp_path, mocker):
        image_tree(tmp_path, ["a"], per_class=1)
        split = SplitConfig(("a", "b"), frozenset({0}), frozenset(), frozenset({1}))
        warning = mocker.patch.object(dataset_manager.logger, "warning")
        registry = dataset_manager.load_dataset(str(tmp_path), split)
        assert len(registry) == 1
        assert "have no directory" in warning.call_args[0][0]

    def test_missing_root(self, dataset_manager, tmp_path):
        with pytest.raises(ConfigError, match="Dataset root"):
            dataset_manager.load_dataset(str(tmp_path / "absent"), make_split(1, 0, 1))


# ---------------------------
# Tests for the registry
# ---------------------------
class TestRegistry:
    def test_role_mismatch(self, toy_split):
        sample = ImageSample("x", 0, SplitRole.NOVEL, pixels=torch.zeros(3, 2, 2))
        registry = SampleRegistry(toy_split)
        with pytest.raises(ValueError, match="has role novel"):
            registry.addElement(sample)

    def test_frozen_rejects(self, toy_data):
        registry, _ = toy_data
        with pytest.raises(TypeError, match="frozen"):
            registry.addElement(registry[0])

    def test_duplicate_id(self, toy_split):
        registry = SampleRegistry(toy_split)
        registry.addElement(ImageSample("x", 0, SplitRole.BASE, pixels=torch.zeros(3, 2, 2)))
        with pytest.raises(ValueError, match="Duplicate identifier"):
            registry.addElement(ImageSample("x", 1, SplitRole.BASE, pixels=torch.zeros(3, 2, 2)))

    def test_class_queries(self, toy_data):
        registry, _ = toy_data
        assert registry.getClassIds(SplitRole.BASE) == [0, 1, 2, 3]
        assert registry.getClassIds(SplitRole.NOVEL) == [5, 6, 7]
        assert len(registry.getSamplesOfClass(5)) == 6
        assert registry.className(5) == "c05"

    def test_with_pixels_tags_stage(self, toy_data):
        registry, _ = toy_data
        sample = registry[0]
        derived = sample.withPixels(torch.zeros(3, 4, 4), SampleStage.FOREGROUND)
        assert derived.identifier == f"{sample.identifier}@foreground"
        assert derived.source_id == sample.identifier
        assert derived.class_id == sample.class_id
        assert derived.stage is SampleStage.FOREGROUND

    @pytest.mark.parametrize("pixels", [torch.zeros(2, 2), torch.full((3, 2, 2), float("nan"))])
    def test_invalid_pixels(self, pixels):
        with pytest.raises(ValueError):
            ImageSample("x", 0, SplitRole.BASE, pixels=pixels)

    def test_needs_pixels_or_path(self):
        with pytest.raises(ValueError, match="needs pixels or a source path"):
            ImageSample("x", 0, SplitRole.BASE)


# ---------------------------
# Tests for episode sampling
# ---------------------------
class TestEpisodes:
    def test_composition(self, toy_data):
        registry, _ = toy_data
        episode = sample_episode(registry, n_way=3, k_shot=2, n_query=3, seed=11)
        assert len(episode.support) == 6 and len(episode.query) == 9
        assert sorted(episode.label_map) == [5, 6, 7]
        assert sorted(episode.label_map.values()) == [0, 1, 2]
        support_ids = {sample.identifier for sample in episode.support}
        assert support_ids.isdisjoint(sample.identifier for sample in episode.query)
        assert all(sample.split_role is SplitRole.NOVEL for sample in episode.support + episode.query)
        assert episode.support_labels().tolist() == [
            episode.label_map[sample.class_id] for sample in episode.support
        ]

    def test_deterministic(self, toy_data):
        registry, _ = toy_data
        first = sample_episode(registry, 2, 1, 4, seed=3)
        second = sample_episode(registry, 2, 1, 4, seed=3)
        assert first.fingerprint() == second.fingerprint()
        assert first.label_map == second.label_map

    def test_class_coverage_over_many_draws(self):
        """
        Over 1000 seeds every eligible novel class and every one of its
        samples shows up; a class too small for the episode never does
        """
        split = make_split(2, 0, 10)
        samples, _ = toy_samples(split, per_class=4, size=8)
        samples = [s for s in samples if s.class_id != 11 or s.identifier.endswith("000.png")]
        registry = SampleRegistry.fromSamples(split, samples)
        class_counts = {class_id: 0 for class_id in range(2, 12)}
        seen = set()
        for seed in range(1000):
            episode = sample_episode(registry, n_way=5, k_shot=1, n_query=1, seed=seed)
            for class_id in episode.label_map:
                class_counts[class_id] += 1
            seen.update(sample.identifier for sample in episode.support + episode.query)
        assert class_counts[11] == 0
        # 9 eligible classes, 5 drawn per episode
        assert all(450 <= class_counts[class_id] <= 670 for class_id in range(2, 11))
        assert seen == {s.identifier for s in samples if 2 <= s.class_id <= 10}

    def test_seeds_differ(self, toy_data):
        registry, _ = toy_data
        fingerprints = {sample_episode(registry, 2, 1, 2, seed=s).fingerprint() for s in range(10)}
        assert len(fingerprints) > 1

    def test_too_many_ways(self, toy_data):
        registry, _ = toy_data
        with pytest.raises(DatasetError, match="need 4 novel classes"):
            sample_episode(registry, 4, 1, 1, seed=0)

    def test_class_too_small(self, toy_data):
        registry, _ = toy_data
        with pytest.raises(DatasetError, match="has 6 samples, needs 7"):
            sample_episode(registry, 3, 1, 6, seed=0)

    def test_non_positive(self, toy_data):
        registry, _ = toy_data
        with pytest.raises(DatasetError):
            sample_episode(registry, 3, 0, 1, seed=0)
