import csv
import io
import os
import shutil
import tempfile
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from ..classes.errors import ConfigError
from ..logger.logger import Logger, LoggerManager
from ..singleton.singleton import SingletonMeta

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp")


def encode_row(fields: Sequence[str]) -> str:
    """One CSV record without the line terminator; fields holding commas are quoted."""
    buffer = io.StringIO()
    csv.writer(buffer, lineterminator="").writerow(fields)
    return buffer.getvalue()


def decode_row(line: str) -> List[str]:
    try:
        return [field.strip() for field in next(csv.reader([line], strict=True), [])]
    except csv.Error as error:
        raise ConfigError(f"Malformed record {line!r}: {error}") from None


class FilesMngr(metaclass=SingletonMeta):
    def __init__(self):
        self.logger: Logger = LoggerManager().getLogger(self.__class__.__qualname__)

    def is_path_exist(self, path: str, what: str = "Path"):
        if not path or not os.path.exists(path):
            raise ConfigError(f"{what} '{path}' does not exist")

    def is_directory(self, path: str, what: str = "Directory"):
        self.is_path_exist(path, what)
        if not os.path.isdir(path):
            raise ConfigError(f"{what} '{path}' is not a directory")

    def list_subdirectories(self, path: str) -> List[str]:
        self.is_directory(path)
        return sorted(
            entry.name
            for entry in os.scandir(path)
            if entry.is_dir() and not entry.name.startswith(".")
        )

    def list_image_files(self, path: str) -> List[str]:
        return sorted(
            entry.name
            for entry in os.scandir(path)
            if entry.is_file() and entry.name.lower().endswith(IMAGE_EXTENSIONS)
        )

    def is_readable_image(self, path: str) -> bool:
        """Checks the file header without decoding the pixel data."""
        try:
            with Image.open(path) as image:
                image.verify()
            return True
        except (OSError, UnidentifiedImageError, SyntaxError, ValueError):
            return False

    def prepare_output_directory(self, path: str, force: bool = False):
        """
        Creates `path`. An existing non-empty directory is refused unless
        `force` is set, in which case its contents are removed first.
        """
        target = Path(path)
        if target.exists() and any(target.iterdir()):
            if not force:
                raise ConfigError(
                    f"Output directory '{path}' is not empty (use --force to overwrite)"
                )
            self.remove_directory(path)
        target.mkdir(parents=True, exist_ok=True)

    def remove_directory(self, directory_path: str):
        if os.path.isdir(directory_path):
            shutil.rmtree(directory_path)
            self.logger.info(
                f"Directory {directory_path} has been removed.", color="bold_yellow"
            )
        else:
            self.logger.warning(f"Directory {directory_path} does not exist.")

    def atomic_write_bytes(self, path: str, data: bytes):
        """
        Writes to a temporary file in the target directory and renames it over
        `path`, so concurrent readers never observe a partial file.
        """
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, temp_path = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(data)
            os.replace(temp_path, target)
        except BaseException:
            if os.path.exists(temp_path):
                os.unlink(temp_path)
            raise

    def write_lines(self, path: str, lines: Iterable[str]):
        text = "".join(f"{line}\n" for line in lines)
        self.atomic_write_bytes(path, text.encode("utf-8"))

    def append_lines(self, path: str, lines: Iterable[str]):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a", encoding="utf-8") as handle:
            for line in lines:
                handle.write(f"{line}\n")

    def read_lines(self, path: str) -> List[str]:
        """Non-empty lines with surrounding whitespace stripped; `#` starts a comment line."""
        self.is_path_exist(path, "File")
        with open(path, "r", encoding="utf-8") as handle:
            return [
                line.strip()
                for line in handle
                if line.strip() and not line.lstrip().startswith("#")
            ]

    def load_image(self, path: str) -> torch.Tensor:
        """Decodes an image file to a 3 x H x W float tensor in [0, 1]."""
        with Image.open(path) as image:
            array = np.asarray(image.convert("RGB"), dtype=np.uint8)
        return torch.from_numpy(array.copy()).permute(2, 0, 1).float() / 255.0

    def load_grayscale(self, path: str) -> torch.Tensor:
        """Decodes an image file to a 1 x H x W float tensor in [0, 1]."""
        with Image.open(path) as image:
            array = np.asarray(image.convert("L"), dtype=np.uint8)
        return torch.from_numpy(array.copy()).unsqueeze(0).float() / 255.0

    def tensor_to_image(self, tensor: torch.Tensor) -> Image.Image:
        array = (
            (tensor.detach().cpu().float().clamp(0, 1) * 255.0)
            .round()
            .to(torch.uint8)
            .permute(1, 2, 0)
            .numpy()
        )
        if array.shape[2] == 1:
            return Image.fromarray(array[:, :, 0])
        return Image.fromarray(array)

    def save_image(self, path: str, tensor: torch.Tensor):
        """Encodes a C x H x W tensor (C = 1 or 3) as 8-bit PNG, atomically."""
        self.save_pil_image(path, self.tensor_to_image(tensor))

    def save_pil_image(self, path: str, image: Image.Image):
        buffer = io.BytesIO()
        image.save(buffer, format="PNG")
        self.atomic_write_bytes(path, buffer.getvalue())
