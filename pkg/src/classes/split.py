from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Tuple

from ..classes.element_types import SplitRole
from ..classes.errors import ConfigError


@dataclass(frozen=True)
class SplitConfig:
    """
    Partition of the registered classes into base / val / novel.

    Class ids are positions in `class_names`, which is kept in lexicographic
    order so ids are identical across machines.
    """

    class_names: Tuple[str, ...]
    base_classes: FrozenSet[int]
    val_classes: FrozenSet[int]
    novel_classes: FrozenSet[int]
    _roles: Dict[int, SplitRole] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if list(self.class_names) != sorted(self.class_names):
            raise ConfigError("class_names must be in lexicographic order")
        if len(set(self.class_names)) != len(self.class_names):
            raise ConfigError("class_names contains duplicates")
        partitions = (
            (SplitRole.BASE, self.base_classes),
            (SplitRole.VAL, self.val_classes),
            (SplitRole.NOVEL, self.novel_classes),
        )
        roles: Dict[int, SplitRole] = {}
        for role, class_ids in partitions:
            for class_id in class_ids:
                if not 0 <= class_id < len(self.class_names):
                    raise ConfigError(f"class id {class_id} is out of range")
                if class_id in roles:
                    raise ConfigError(
                        f"class '{self.class_names[class_id]}' assigned to both "
                        f"{roles[class_id].value} and {role.value}"
                    )
                roles[class_id] = role
        if len(roles) != len(self.class_names):
            missing = sorted(set(range(len(self.class_names))) - set(roles))
            raise ConfigError(
                f"unassigned class '{self.class_names[missing[0]]}' in split"
            )
        object.__setattr__(self, "_roles", roles)

    def role_of(self, class_id: int) -> SplitRole:
        try:
            return self._roles[class_id]
        except KeyError:
            raise ConfigError(f"unassigned class id {class_id}") from None

    def class_id(self, class_name: str) -> int:
        try:
            return self.class_names.index(class_name)
        except ValueError:
            raise ConfigError(f"unassigned class '{class_name}'") from None

    def classes_of(self, role: SplitRole) -> FrozenSet[int]:
        return {
            SplitRole.BASE: self.base_classes,
            SplitRole.VAL: self.val_classes,
            SplitRole.NOVEL: self.novel_classes,
        }[role]

    @property
    def counts(self) -> Tuple[int, int, int]:
        return len(self.base_classes), len(self.val_classes), len(self.novel_classes)
