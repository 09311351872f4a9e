import re
import sys

VERSION_PATTERN = r'(__version__\s*=\s*")(\d+)\.(\d+)\.(\d+)(")'


def bump(match: re.Match) -> str:
    major, minor, patch = (int(match.group(i)) for i in (2, 3, 4))
    patch += 1
    if patch >= 100:
        minor, patch = minor + 1, 0
    if minor >= 100:
        major, minor = major + 1, 0
    return f"{match.group(1)}{major}.{minor}.{patch}{match.group(5)}"


def increment_version(file_path: str):
    """Bumps the patch number of `__version__` in a package `__init__.py`."""
    with open(file_path, "r", encoding="utf-8") as handle:
        content = handle.read()
    updated, count = re.subn(VERSION_PATTERN, bump, content)
    if count == 0:
        print(f"No __version__ string in {file_path}")
        sys.exit(1)
    with open(file_path, "w", encoding="utf-8") as handle:
        handle.write(updated)
    print(f"Version incremented in {file_path}")


if __name__ == "__main__":
    increment_version(sys.argv[1] if len(sys.argv) > 1 else "src/__init__.py")
