from dataclasses import dataclass
from typing import Mapping

from ..classes.errors import ConfigError
from ..utils.file_manager import decode_row, encode_row


@dataclass(frozen=True)
class Quadruplet:
    """
    Two same-class pairs from two different base classes whose endpoints share
    postures: A1 -> A2 within class A matches B1 -> B2 within class B.
    """

    a1: str
    a2: str
    b1: str
    b2: str
    class_a: int
    class_b: int

    def __post_init__(self):
        if self.class_a == self.class_b:
            raise ValueError(f"Quadruplet classes must differ: {self}")
        if self.a1 == self.a2 or self.b1 == self.b2:
            raise ValueError(f"Quadruplet pairs must hold distinct samples: {self}")

    def to_line(self) -> str:
        return encode_row((self.a1, self.a2, self.b1, self.b2))

    @classmethod
    def from_line(cls, line: str, class_of: Mapping[str, int]) -> "Quadruplet":
        """
        Parses a manifest line. `class_of` maps sample ids to class ids and is
        used both to fill the class fields and to check membership.
        """
        parts = decode_row(line)
        if len(parts) != 4:
            raise ConfigError(f"Malformed quadruplet line: {line!r}")
        missing = [part for part in parts if part not in class_of]
        if missing:
            raise ConfigError(f"Quadruplet refers to unknown sample '{missing[0]}'")
        a1, a2, b1, b2 = parts
        if class_of[a1] != class_of[a2] or class_of[b1] != class_of[b2]:
            raise ConfigError(f"Quadruplet pairs cross classes: {line!r}")
        return cls(a1, a2, b1, b2, class_of[a1], class_of[b1])
