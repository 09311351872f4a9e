from enum import Enum, auto


class SplitRole(Enum):
    BASE = "base"
    VAL = "val"
    NOVEL = "novel"


class EmptyMaskPolicy(Enum):
    WHOLE_IMAGE = "whole_image"
    ERROR = "error"


class EntropySign(Enum):
    # CE + H(p): drives confident query predictions
    MINIMIZE_ENTROPY = "minimize_entropy"
    # CE + sum p log p, rewards spread-out query predictions
    PAPER_LITERAL = "paper_literal"


class BackboneTypes(Enum):
    CONV4 = "conv4"
    RESNET18 = "resnet18"
    RESNET34 = "resnet34"


class TransductiveScope(Enum):
    ALL = "all"
    FINAL_BLOCK = "final_block"


class SampleStage(Enum):
    RAW = auto()
    RESIZED = auto()
    BACKGROUND_REMOVED = auto()
    FOREGROUND = auto()
    GENERATED = auto()

    @property
    def tag(self) -> str:
        return self.name.lower()
