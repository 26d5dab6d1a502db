from __future__ import annotations

import random

import pytest

from clarishop.catalog import LIST_FACETS, Catalog, ProductItem


def make_item(item_id: str, category: str, **facets) -> ProductItem:
    return ProductItem(id=item_id, title=facets.pop("title", f"{category} {item_id}"), category=category, **facets)


@pytest.fixture
def canvas_item() -> ProductItem:
    return ProductItem(
        id="cs-001",
        title="Urban thick-sole canvas shoes leopard pattern casual low-cut",
        category="Canvas shoes",
        brand=("Urbanline",),
        target_customer=("Female", "Youth"),
        applicable_scenario=("Spring",),
        decorative_attribute=("Thick-soled", "Leopard print", "Round head"),
        material=("Rubber", "Canvas"),
        style=("Lace-up", "Low-cut", "Casual"),
        specification=("EUR36", "EUR37", "EUR38"),
        color=("Army green", "Purple", "Pink"),
        function=(),
    )


@pytest.fixture
def pants_catalog() -> Catalog:
    items = [
        make_item(
            "cp-001",
            "Casual pants",
            material=("Polyester fiber", "Cotton"),
            color=("Black",),
            style=("Loose",),
        ),
        make_item(
            "cp-002",
            "Casual pants",
            material=("Cotton",),
            color=("Blue", "Black"),
            style=("Slim",),
        ),
        make_item(
            "cp-003",
            "Casual pants",
            material=("Linen",),
            color=("White",),
            style=("Loose", "Straight"),
        ),
        make_item(
            "sh-001",
            "Sports shoes",
            material=("Mesh",),
            color=("White",),
            applicable_scenario=("Outdoor", "Basketball"),
        ),
    ]
    return Catalog(items)


_VOCAB = [
    "Red",
    "Deep Red",
    "Blue",
    "Navy blue",
    "Cotton",
    "Polyester fiber",
    "Linen",
    "Loose fit",
    "Slim",
    "Sport",
    "Outdoor",
    "Retro",
    "Waterproof",
    "Breathable",
    "EUR38",
    "Mesh",
]


def _mangle(rng: random.Random, value: str) -> str:
    roll = rng.random()
    if roll < 0.25:
        return value.upper()
    if roll < 0.5:
        return value.lower()
    if roll < 0.65:
        return f"  {value} "
    return value


def random_catalog(
    rng: random.Random,
    *,
    n_items: int = 60,
    n_categories: int = 3,
    vocab: list[str] | None = None,
) -> Catalog:
    """Messy random catalog: mixed casing, stray whitespace, duplicate values."""
    vocab = vocab or _VOCAB
    categories = [f"Category {c}" for c in range(n_categories)]
    items = []
    for i in range(n_items):
        category = rng.choice(categories)
        facets = {}
        for facet in LIST_FACETS:
            if rng.random() < 0.4:
                continue
            count = rng.randint(1, 4)
            facets[facet] = [_mangle(rng, rng.choice(vocab)) for _ in range(count)]
        items.append(
            ProductItem(id=f"item-{i:04d}", title=f"{category} product {i}", category=category, **facets)
        )
    return Catalog(items)
