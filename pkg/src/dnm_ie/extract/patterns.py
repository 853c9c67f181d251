"""Per-market RegEx registry used to label listing pages.

Every pattern runs against lowercased, normalized page text (see
:func:`dnm_ie.extract.text.normalize`).  ``original`` keeps the pattern as it
was published when the shipped form had to be repaired to compile or to match
normalized text; it is informational only.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property


class PatternConfigError(KeyError):
    """Raised when a market or entity type has no registered pattern."""


@dataclass(frozen=True)
class PatternSpec:
    pattern: str
    group: int = 1
    original: str | None = None

    @cached_property
    def regex(self) -> re.Pattern:
        return re.compile(self.pattern)


# Entity type names shared by all components.
PRODUCT = "product"
MARKET_NAME = "market_name"
PRICE = "product_price"
MODEL = "model"
STOCK = "quantity_in_stock"
VIEWS = "product_views"
VENDOR = "vendor_name"
DESCRIPTION = "product_description"
SKU = "sku"
BRAND = "brand"

CORE_TYPES = (MARKET_NAME, PRODUCT, MODEL, STOCK, PRICE, DESCRIPTION, VIEWS, VENDOR)
NOVEL_TYPES = (SKU, BRAND)

_VIEWS_EUR = PatternSpec(r"(\d+)\s+\d+,\d+\s?€")

_AGARTHA_COMMON = {
    MARKET_NAME: PatternSpec(r"(\w+)\s+purchase"),
    MODEL: PatternSpec(r"category\s+(\w+)"),
    STOCK: PatternSpec(r"availability (\d+)"),
    DESCRIPTION: PatternSpec(r"listings (.+?) purchase"),
    VIEWS: _VIEWS_EUR,
    VENDOR: PatternSpec(r"vendor\s+(\w+)"),
}

DEFAULT_PATTERNS: dict[str, dict[str, PatternSpec]] = {
    "agartha_item": {
        **_AGARTHA_COMMON,
        PRODUCT: PatternSpec(r"(?:listings.*?)1listings\s+(.+?)\s+message"),
        PRICE: PatternSpec(r"price (\d+\.\d+)"),
    },
    "agartha_purchase": {
        **_AGARTHA_COMMON,
        PRODUCT: PatternSpec(r"(?:purchase.*?)1purchase\s+(.+?)\s+category"),
        PRICE: PatternSpec(r"(\d+\.\d+)\s+(usd|btc)"),
    },
    "berlusconi": {
        MARKET_NAME: PatternSpec(r"\bberlusconi\b", group=0),
        PRODUCT: PatternSpec(
            r"^(.+?)\s\d+(?:\.\d+)?\s*eur",
            original=r"$^(.+?)$\s\d+(?:\.\d+)?\s*eur",
        ),
        MODEL: PatternSpec(r"class\s+(\w+)"),
        STOCK: PatternSpec(r"(\d+)\s+in stock", original=r"(\d+) s+in stock"),
        PRICE: PatternSpec(r"(\d+(?:\.\d+)?)(?=\s+eur)"),
        # English market: the published French anchors (avis / modèle) are
        # translated so French vocabulary stays confined to cocorico pages.
        DESCRIPTION: PatternSpec(r"reviews (.+?) model", original=r"avis (.+?) modèle"),
        VIEWS: _VIEWS_EUR,
        VENDOR: PatternSpec(r"vendor\s+(\w+)"),
    },
    "cannahome": {
        MARKET_NAME: PatternSpec(r"(\w+)\s+purchase"),
        PRODUCT: PatternSpec(r"details (.+?) availability"),
        MODEL: PatternSpec(r"category\s+(\w+)"),
        STOCK: PatternSpec(r"availability (\d+)"),
        PRICE: PatternSpec(r"escrow (\d+.\d+)"),
        DESCRIPTION: PatternSpec(r"reviews (.+?) model", original=r"avis (.+?) modèle"),
        VIEWS: PatternSpec(r"(\w+)\s+orders"),
        VENDOR: PatternSpec(r"vendor\s+(\w+)"),
    },
    "cocorico": {
        MARKET_NAME: PatternSpec(
            r"\bcocorico\smarket\b", group=0, original=r"\bcocorico\s market\b"
        ),
        PRODUCT: PatternSpec(r"recherche (.+?) description"),
        MODEL: PatternSpec(r"modèle\s+(.+?)\s+disponibilité"),
        # normalization strips ':' so the colon becomes optional
        STOCK: PatternSpec(r"disponibilité :?(\d+)", original=r"disponibilité :(\d+)"),
        PRICE: PatternSpec(r"(\d+,\d+)\s?€", original=r"(\d+, d+)\s?€"),
        DESCRIPTION: PatternSpec(r"avis (.+?) modèle"),
        VIEWS: _VIEWS_EUR,
        VENDOR: PatternSpec(r"(\b\w+\b)\s+rating"),
    },
    "darkmarket": {
        MARKET_NAME: PatternSpec(r"(\w+)\s+purchase"),
        PRODUCT: PatternSpec(r"1 (.+?) quality"),
        MODEL: PatternSpec(r"type\s+(\w+)"),
        STOCK: PatternSpec(r"leftsold (\d+)"),
        PRICE: PatternSpec(r"offers (\d+\.+\d+)"),
        DESCRIPTION: PatternSpec(r"listings (.+?) quality"),
        VIEWS: _VIEWS_EUR,
        VENDOR: PatternSpec(r"information\s+(\w+)"),
    },
    "silkroad": {
        MARKET_NAME: PatternSpec(r"\bsilk\sroad\b", group=0, original=r"\bsilk\s road\b"),
        PRODUCT: PatternSpec(r"usd\s+(.+?)\s+price", original=r"usd+(.+?)\s+price"),
        MODEL: PatternSpec(r"category\s+(.+?)\s+stock", original=r"category+(.+?)\s+stock"),
        STOCK: PatternSpec(r"remaining\s*(\d+)"),
        PRICE: PatternSpec(r"price\s*(\d+)", original=r"price s*(\d+)"),
        DESCRIPTION: PatternSpec(r"reviews (.+?) model", original=r"avis (.+?) modèle"),
        VIEWS: _VIEWS_EUR,
        VENDOR: PatternSpec(r"listings\s+(\w+)"),
    },
    # Robustness market: no published patterns, anchors follow the English
    # markets plus the two extra entity types.
    "palmetto": {
        MARKET_NAME: PatternSpec(r"\b(palmetto)\s+state\s+armory\b"),
        PRODUCT: PatternSpec(r"product\s+(.+?)\s+brand"),
        BRAND: PatternSpec(r"brand\s+(\w+)"),
        SKU: PatternSpec(r"sku\s+([\w-]+)"),
        MODEL: PatternSpec(r"category\s+(\w+)"),
        VENDOR: PatternSpec(r"vendor\s+(\w+)"),
        STOCK: PatternSpec(r"availability (\d+)"),
        PRICE: PatternSpec(r"price (\d+\.\d+)"),
    },
}


@dataclass
class PatternSet:
    """Market id -> entity type -> :class:`PatternSpec`."""

    markets: dict[str, dict[str, PatternSpec]] = field(
        default_factory=lambda: {m: dict(p) for m, p in DEFAULT_PATTERNS.items()}
    )

    def for_market(self, market_id: str) -> dict[str, PatternSpec]:
        try:
            return self.markets[market_id]
        except KeyError:
            raise PatternConfigError(f"no patterns registered for market {market_id!r}") from None

    def entity_types(self, market_id: str) -> list[str]:
        return list(self.for_market(market_id))

    def __contains__(self, market_id: object) -> bool:
        return market_id in self.markets

    def validate(self) -> None:
        for market, specs in self.markets.items():
            for etype, spec in specs.items():
                try:
                    rx = spec.regex
                except re.error as exc:
                    raise PatternConfigError(f"{market}/{etype}: {exc}") from exc
                if spec.group > rx.groups:
                    raise PatternConfigError(
                        f"{market}/{etype}: group {spec.group} > {rx.groups} groups"
                    )
