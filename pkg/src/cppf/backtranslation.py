"""Back-translation augmentation through a pivot language."""

from __future__ import annotations

from cppf.clients import TranslationClient

SOURCE_LANGUAGE = "EN"
PIVOT_LANGUAGES = ("AR", "FR", "DE", "ZH", "HI")


class PivotError(ValueError):
    """Pivot language not supported."""


def back_translate(client: TranslationClient, text: str, pivot: str) -> str:
    """Round-trip ``text`` through ``pivot`` and back to the source language."""
    if pivot not in PIVOT_LANGUAGES:
        raise PivotError(
            f"unsupported pivot {pivot!r}; supported: {PIVOT_LANGUAGES}"
        )
    if not text:
        raise ValueError("text must be nonempty")
    intermediate = client.translate(text, SOURCE_LANGUAGE, pivot)
    return client.translate(intermediate, pivot, SOURCE_LANGUAGE)


def method_tag(pivot: str) -> str:
    if pivot not in PIVOT_LANGUAGES:
        raise PivotError(f"unsupported pivot {pivot!r}")
    return f"bt-{pivot}"
