import random

from ..classes.episode import Episode
from ..classes.errors import DatasetError
from ..classes.image_sample import SampleRegistry


def sample_episode(
    registry: SampleRegistry, n_way: int, k_shot: int, n_query: int, seed: int
) -> Episode:
    """
    Draws an N-way K-shot task from the novel classes of `registry`.

    Classes are drawn among those holding at least `k_shot + n_query` samples;
    episode labels follow the draw order. The result depends only on the
    registry and `seed`.
    """
    if min(n_way, k_shot, n_query) < 1:
        raise DatasetError("n_way, k_shot and n_query must be positive")
    needed = k_shot + n_query
    novel_classes = sorted(registry.split.novel_classes)
    if len(novel_classes) < n_way:
        raise DatasetError(
            f"{n_way}-way episodes need {n_way} novel classes, the split has {len(novel_classes)}"
        )
    eligible = [
        class_id
        for class_id in novel_classes
        if len(registry.getSamplesOfClass(class_id)) >= needed
    ]
    if len(eligible) < n_way:
        deficient = next(c for c in novel_classes if c not in eligible)
        raise DatasetError(
            f"novel class '{registry.className(deficient)}' has "
            f"{len(registry.getSamplesOfClass(deficient))} samples, needs {needed}"
        )

    rng = random.Random(seed)
    classes = rng.sample(eligible, n_way)
    support, query = [], []
    for class_id in classes:
        drawn = rng.sample(registry.getSamplesOfClass(class_id), needed)
        support.extend(drawn[:k_shot])
        query.extend(drawn[k_shot:])

    return Episode(
        n_way=n_way,
        k_shot=k_shot,
        n_query=n_query,
        support=support,
        query=query,
        label_map={class_id: label for label, class_id in enumerate(classes)},
        seed=seed,
    )
