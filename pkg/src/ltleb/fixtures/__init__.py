"""Bundled example machines (``*.ebm``)."""
from importlib import resources


def fixture_names():
    return sorted(p.name[:-4] for p in resources.files(__name__).iterdir() if p.name.endswith(".ebm"))


def fixture_text(name: str) -> str:
    return resources.files(__name__).joinpath(name + ".ebm").read_text(encoding="utf-8")


def fixture_path(name: str):
    """Filesystem path of a bundled fixture (the package is installed from a directory)."""
    from pathlib import Path
    return Path(str(resources.files(__name__).joinpath(name + ".ebm")))
