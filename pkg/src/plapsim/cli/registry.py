"""Anchor registry: a shipped JSON manifest binding claim anchors to audit procedures and scenarios."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources


class UnknownAnchorError(KeyError):
    def __init__(self, anchor, known):
        super().__init__(f"unknown anchor {anchor!r}; known anchors: {', '.join(sorted(known))}")
        self.anchor = anchor

    def __str__(self):
        return self.args[0]


@lru_cache(maxsize=None)
def _manifest_text() -> str:
    return resources.files("plapsim.cli").joinpath("anchors.json").read_text(encoding="utf-8")


def load_registry() -> dict:
    """anchor -> {"audit", "description", "scenario"}; a fresh copy on every call."""
    data = json.loads(_manifest_text())
    if data.get("schema_version") != 1:
        raise ValueError("unsupported anchor manifest schema version")
    return data["anchors"]


def lookup(anchor: str) -> dict:
    reg = load_registry()
    if anchor not in reg:
        raise UnknownAnchorError(anchor, reg)
    return reg[anchor]
