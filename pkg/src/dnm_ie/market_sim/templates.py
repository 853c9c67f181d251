"""Page layouts for the simulated markets.

A layout is a list of sections.  Text sections are lists of pieces joined by a
single space: plain strings are keywords, :class:`Slot` marks an entity and
``EURO`` a converted euro amount rendered next to the views counter.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..extract.patterns import (
    BRAND, DESCRIPTION, MARKET_NAME, MODEL, PRICE, PRODUCT, SKU, STOCK, VENDOR, VIEWS,
)


@dataclass(frozen=True)
class Slot:
    entity_type: str


EURO = object()

# Average tokens per page of the original crawl; palmetto comes from the
# robustness dataset description.
TOKEN_BUDGETS = {
    "agartha_item": 230,
    "agartha_purchase": 230,
    "berlusconi": 184,
    "cannahome": 1385,
    "cocorico": 153,
    "darkmarket": 175,
    "silkroad": 267,
    "palmetto": 1246,
}

# Page counts of the original dataset (agartha is split evenly between its two
# page kinds; palmetto from the robustness dataset).
REFERENCE_PAGE_COUNTS = {
    "agartha_item": 667,
    "agartha_purchase": 667,
    "berlusconi": 123,
    "cannahome": 1037,
    "cocorico": 1936,
    "darkmarket": 658,
    "silkroad": 1649,
    "palmetto": 1386,
}

DEFAULT_MARKETS = ("agartha_item", "berlusconi", "cannahome", "cocorico", "darkmarket", "silkroad")
MARKET_IDS = tuple(TOKEN_BUDGETS)

Section = tuple  # (kind, payload)


@dataclass(frozen=True)
class MarketTemplate:
    market_id: str
    language: str
    layout: tuple[Section, ...]
    token_budget: int
    display_name: str
    entity_slots: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.entity_slots:
            slots = []
            for kind, payload in self.layout:
                for piece in _pieces(kind, payload):
                    if isinstance(piece, Slot):
                        slots.append(piece.entity_type)
            object.__setattr__(self, "entity_slots", tuple(slots))


def _pieces(kind, payload):
    if kind in ("div", "header"):
        yield from payload
    elif kind == "table":
        for row in payload:
            yield from row


def _t(*rows):
    return ("table", tuple(tuple(r) for r in rows))


def _d(*pieces):
    return ("div", tuple(pieces))


def _h(*pieces):
    return ("header", tuple(pieces))


NAV = ("nav", None)
FOOTER = ("footer", None)

LAYOUTS: dict[str, tuple] = {
    "agartha_item": (
        _h(Slot(MARKET_NAME), "Purchase"), NAV,
        _d("Listings", Slot(DESCRIPTION), "Purchase"),
        _d("1Listings", Slot(PRODUCT), "Message"),
        _t(["Vendor", Slot(VENDOR)], ["Category", Slot(MODEL)], ["Availability:", Slot(STOCK)],
           ["Price", Slot(PRICE), "USD"], ["Views", Slot(VIEWS), EURO]),
        FOOTER,
    ),
    "agartha_purchase": (
        _h(Slot(MARKET_NAME), "Purchase"), NAV,
        _d("Listings", Slot(DESCRIPTION), "Purchase"),
        _d("1Purchase", Slot(PRODUCT)),
        _t(["Category", Slot(MODEL)], ["Vendor", Slot(VENDOR)], ["Availability:", Slot(STOCK)],
           ["Total", Slot(PRICE), "USD"], ["Views", Slot(VIEWS), EURO]),
        FOOTER,
    ),
    "berlusconi": (
        _h(Slot(PRODUCT), Slot(PRICE), "EUR"),
        _d(Slot(MARKET_NAME), "Market"), NAV,
        _t(["Vendor", Slot(VENDOR)], ["Class", Slot(MODEL)], [Slot(STOCK), "in stock"],
           ["Views", Slot(VIEWS), EURO]),
        _d("Reviews", Slot(DESCRIPTION), "Model", "info"),
        FOOTER,
    ),
    "cannahome": (
        _h(Slot(MARKET_NAME), "Purchase"), NAV,
        _d("Details", Slot(PRODUCT), "Availability", Slot(STOCK)),
        _t(["Category", Slot(MODEL)], ["Vendor", Slot(VENDOR)], ["Escrow", Slot(PRICE)],
           [Slot(VIEWS), "Orders"]),
        _d("Reviews", Slot(DESCRIPTION), "Model"),
        FOOTER,
    ),
    "cocorico": (
        _h(Slot(MARKET_NAME)), NAV,
        _d("Recherche", Slot(PRODUCT), "Description"),
        _d("Avis", Slot(DESCRIPTION), "Modèle", Slot(MODEL), "Disponibilité :", Slot(STOCK)),
        _d("Vendeur", Slot(VENDOR), "rating", "4.8"),
        _d("Vues", Slot(VIEWS), Slot(PRICE), "€"),
        FOOTER,
    ),
    "darkmarket": (
        _h(Slot(MARKET_NAME), "Purchase"), NAV,
        _d("Listings", Slot(DESCRIPTION), "Quality"),
        _d("1", Slot(PRODUCT), "Quality", "A+"),
        _t(["Type", Slot(MODEL)], ["Leftsold", Slot(STOCK)], ["Offers", Slot(PRICE)],
           ["Information", Slot(VENDOR)], ["Views", Slot(VIEWS), EURO]),
        FOOTER,
    ),
    "silkroad": (
        _h(Slot(MARKET_NAME)), NAV,
        _d("Balance", "0.00", "USD", Slot(PRODUCT), "Price", Slot(PRICE)),
        _d("Category", Slot(MODEL), "Stock", "remaining", Slot(STOCK)),
        _d("Vendor", "listings", Slot(VENDOR)),
        _d("Reviews", Slot(DESCRIPTION), "Model"),
        _d("Views", Slot(VIEWS), EURO),
        FOOTER,
    ),
    "palmetto": (
        _h(Slot(MARKET_NAME), "State", "Armory"), NAV,
        _d("Product", Slot(PRODUCT), "Brand", Slot(BRAND)),
        _t(["SKU", Slot(SKU)], ["Category", Slot(MODEL)], ["Vendor", Slot(VENDOR)],
           ["Availability", Slot(STOCK)], ["Price", Slot(PRICE), "USD"]),
        FOOTER,
    ),
}

DISPLAY_NAMES = {
    "agartha_item": "Agartha",
    "agartha_purchase": "Agartha",
    "berlusconi": "Berlusconi",
    "cannahome": "Cannahome",
    "cocorico": "Cocorico Market",
    "darkmarket": "DarkMarket",
    "silkroad": "Silk Road",
    "palmetto": "Palmetto",
}

TEMPLATES: dict[str, MarketTemplate] = {
    m: MarketTemplate(
        market_id=m,
        language="fr" if m == "cocorico" else "en",
        layout=LAYOUTS[m],
        token_budget=TOKEN_BUDGETS[m],
        display_name=DISPLAY_NAMES[m],
    )
    for m in MARKET_IDS
}
