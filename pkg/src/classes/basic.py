from typing import Callable, Dict, Generic, Iterator, List, Optional, Type, TypeVar

from ..logger.logger import Logger, LoggerManager


class Basic:
    """
    Base class for every identified pipeline entity (image samples, saliency
    maps). The identifier is the stable, dataset-unique key that caches,
    manifests and episode reports refer to.
    """

    def __init__(self, identifier: str):
        """
        Args:
            identifier (str): Unique key of the entity, e.g. `"003_circle_red/7.png"`.
        """
        self.identifier: str = identifier

    def getName(self) -> str:
        return self.identifier

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(identifier={self.identifier!r})"


T = TypeVar("T", bound=Basic)


class BasicArray(Generic[T]):
    """
    An ordered container of `Basic` elements with identifier lookup.

    Elements keep insertion order; identifiers must be unique. Once `freeze()`
    is called the array rejects further additions, which makes it safe to share
    between concurrent readers.
    """

    def __init__(self, element_type: Type[T] = Basic):
        self.elements: List[T] = []
        self.element_type: Type[T] = element_type
        self._index: Dict[str, int] = {}
        self._frozen = False
        self.logger: Logger = LoggerManager().getLogger(self.__class__.__qualname__)

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self) -> Iterator[T]:
        return iter(self.elements)

    def __getitem__(self, index: int) -> T:
        return self.elements[index]

    def __contains__(self, identifier: str) -> bool:
        return identifier in self._index

    def addElement(self, new_element: T) -> int:
        """
        Appends an element and returns its index.

        Raises:
            TypeError: If the array is frozen or the element has the wrong type.
            ValueError: If an element with the same identifier is already present.
        """
        if self._frozen:
            raise TypeError(f"{self.__class__.__name__} is frozen")
        if not isinstance(new_element, self.element_type):
            raise TypeError(
                f"Object should be of type {self.element_type.__name__} but received "
                f"an object of type {type(new_element).__name__}"
            )
        if new_element.identifier in self._index:
            raise ValueError(f"Duplicate identifier '{new_element.identifier}'")
        self._index[new_element.identifier] = len(self.elements)
        self.elements.append(new_element)
        return len(self.elements) - 1

    def freeze(self) -> "BasicArray[T]":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def getElement(self, identifier: str) -> Optional[T]:
        index = self._index.get(identifier)
        return None if index is None else self.elements[index]

    def getElementIndex(self, identifier: str) -> Optional[int]:
        return self._index.get(identifier)

    def filter(self, predicate: Callable[[T], bool]) -> List[T]:
        return [element for element in self.elements if predicate(element)]

    def identifiers(self) -> List[str]:
        return [element.identifier for element in self.elements]
