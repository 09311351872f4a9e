from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from ..classes.errors import ConfigError
from ..utils.file_manager import encode_row


@dataclass(frozen=True)
class VariantFlags:
    """Which pipeline components an evaluation run switches on."""

    remove_background: bool = False
    resize_foreground: bool = False
    use_generator: bool = False
    transductive: bool = False

    def __post_init__(self):
        if self.resize_foreground and not self.remove_background:
            raise ConfigError("resize_foreground requires remove_background")

    @property
    def name(self) -> str:
        if self.use_generator and self.resize_foreground:
            name = "FOT"
        else:
            parts = ["baseline"]
            if self.remove_background:
                parts = ["RB&RF" if self.resize_foreground else "RB"]
            if self.use_generator:
                parts.append("G")
            name = "+".join(parts)
        return f"{name}*" if self.transductive else name

    @classmethod
    def ablation_grid(cls, transductive: bool = False) -> List["VariantFlags"]:
        """baseline, +RB, +RB&RF and the full method, in that order."""
        return [
            cls(transductive=transductive),
            cls(remove_background=True, transductive=transductive),
            cls(remove_background=True, resize_foreground=True, transductive=transductive),
            cls(True, True, True, transductive),
        ]


@dataclass
class EvalReport:
    n_way: int
    k_shot: int
    n_query: int
    dataset: str
    flags: VariantFlags
    n_episodes: int
    mean_accuracy: float
    ci95: float
    per_episode: List[float]
    seed: int
    episode_fingerprints: List[str] = field(default_factory=list)

    @classmethod
    def from_accuracies(
        cls,
        accuracies: Sequence[float],
        n_way: int,
        k_shot: int,
        n_query: int,
        dataset: str,
        flags: VariantFlags,
        seed: int,
        fingerprints: Sequence[str] = (),
    ) -> "EvalReport":
        """
        Builds a report from per-episode accuracies given in percent. The
        interval half-width is 1.96 * std / sqrt(n) with the population std,
        which is 0 for a single episode.
        """
        if not accuracies:
            raise ValueError("at least one episode is required")
        values = np.asarray(accuracies, dtype=np.float64)
        mean = float(values.mean())
        ci95 = float(1.96 * values.std() / np.sqrt(len(values)))
        return cls(
            n_way=n_way,
            k_shot=k_shot,
            n_query=n_query,
            dataset=dataset,
            flags=flags,
            n_episodes=len(values),
            mean_accuracy=mean,
            ci95=ci95,
            per_episode=[float(value) for value in values],
            seed=seed,
            episode_fingerprints=list(fingerprints),
        )

    @property
    def task(self) -> str:
        return f"{self.dataset}-{self.n_way}way-{self.k_shot}shot-{self.n_query}query"

    def to_line(self) -> str:
        return encode_row(
            (
                self.task,
                self.flags.name,
                str(self.n_episodes),
                f"{self.mean_accuracy:.2f}",
                f"{self.ci95:.2f}",
                str(self.seed),
            )
        )

    def summary(self) -> str:
        return f"{self.mean_accuracy:.2f} +- {self.ci95:.2f}"
