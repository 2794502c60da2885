"""Hierarchical region codes.

Codes are dash-separated paths below a country root, one segment per level:

    AT              country
    AT-5            federal state
    AT-5-02         district
    AT-5-02-007     municipality

A parameter table stored at a coarse level answers queries for any finer
code by walking the code up to the table's level.
"""

from __future__ import annotations

from .errors import InputError

LEVEL_NAMES = ("country", "federal-state", "district", "municipality")

COUNTRY, FEDERAL_STATE, DISTRICT, MUNICIPALITY = range(4)


def level_of(code: str) -> int:
    if not code or code.startswith("-") or code.endswith("-") or "--" in code:
        raise InputError(f"malformed region code {code!r}")
    level = code.count("-")
    if level >= len(LEVEL_NAMES):
        raise InputError(f"region code {code!r} is deeper than municipality level")
    return level


def level_name(level: int) -> str:
    return LEVEL_NAMES[level]


def parent(code: str) -> str:
    if level_of(code) == COUNTRY:
        raise InputError(f"country code {code!r} has no parent")
    return code.rsplit("-", 1)[0]


def region_at_level(code: str, level: int) -> str:
    """Ancestor of ``code`` at ``level``; ``code`` itself if already there."""
    own = level_of(code)
    if own < level:
        raise InputError(
            f"region {code!r} ({level_name(own)}) is coarser than requested {level_name(level)}"
        )
    return "-".join(code.split("-")[: level + 1])
