"""Preset networks shipped as description-language files."""

from importlib import resources

NAMES = ("simple_mzi", "nested_aligned", "nested_misaligned", "nested_blocked")


def preset_text(name: str) -> str:
    if name not in NAMES:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(NAMES)}")
    return resources.files(__name__).joinpath(f"{name}.net").read_text(encoding="utf-8")
