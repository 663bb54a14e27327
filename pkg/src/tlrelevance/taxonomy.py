"""Traffic-light class taxonomy: states, pictograms, arrow markings, dataset schemas.

Canonical labels are lowercase snake_case with the state first, e.g.
``red_yellow_straight`` or ``off``.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

from .errors import InvalidCombinationError, SchemaError


class State(str, enum.Enum):
    RED = "red"
    YELLOW = "yellow"
    RED_YELLOW = "red_yellow"
    GREEN = "green"
    OFF = "off"

    def __str__(self):
        return self.value


class Pictogram(str, enum.Enum):
    CIRCLE = "circle"
    STRAIGHT = "straight"
    LEFT = "left"
    RIGHT = "right"
    STRAIGHT_LEFT = "straight_left"
    STRAIGHT_RIGHT = "straight_right"

    def __str__(self):
        return self.value


class ArrowClass(str, enum.Enum):
    """Directional arrow markings painted on the road."""

    STRAIGHT = "straight"
    LEFT = "left"
    RIGHT = "right"
    STRAIGHT_LEFT = "straight_left"
    STRAIGHT_RIGHT = "straight_right"

    def __str__(self):
        return self.value


ARROW_ORDER = tuple(ArrowClass)
LIT_STATES = (State.RED, State.YELLOW, State.RED_YELLOW, State.GREEN)
# states averaged into mAP_3states
THREE_STATES = (State.RED, State.YELLOW, State.GREEN)

_STATE_INDEX = {s: i for i, s in enumerate(State)}
_PICTOGRAM_INDEX = {p: i for i, p in enumerate(Pictogram)}
# longest first so "red_yellow_..." is not read as "red" + "yellow_..."
_STATE_PREFIXES = sorted((s.value for s in State), key=len, reverse=True)


@dataclass(frozen=True, order=False)
class TLClass:
    state: State
    pictogram: Optional[Pictogram] = None

    def __post_init__(self):
        if (self.state is State.OFF) != (self.pictogram is None):
            raise SchemaError(
                f"pictogram must be absent iff state is off (got {self.state.value}, {self.pictogram})"
            )

    def __str__(self):
        return render_class(self)

    def sort_key(self):
        pict = -1 if self.pictogram is None else _PICTOGRAM_INDEX[self.pictogram]
        return (_STATE_INDEX[self.state], pict)

    def __lt__(self, other):
        if not isinstance(other, TLClass):
            return NotImplemented
        return self.sort_key() < other.sort_key()


OFF = TLClass(State.OFF)

ClassKey = Union[TLClass, ArrowClass, State]


def render_class(c: ClassKey) -> str:
    if isinstance(c, TLClass):
        if c.pictogram is None:
            return c.state.value
        return f"{c.state.value}_{c.pictogram.value}"
    return c.value


def class_sort_key(c: ClassKey):
    """Total order over every class key type, used for canonical report ordering."""
    if isinstance(c, TLClass):
        return (0,) + c.sort_key()
    if isinstance(c, State):
        return (1, _STATE_INDEX[c], 0)
    return (2, ARROW_ORDER.index(c), 0)


@dataclass(frozen=True)
class DatasetSchema:
    name: str
    classes: frozenset
    image_width: int
    image_height: int

    def __contains__(self, c):
        return c in self.classes

    def sorted_classes(self):
        return sorted(self.classes, key=class_sort_key)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "classes": [render_class(c) for c in self.sorted_classes()],
            "image_width": self.image_width,
            "image_height": self.image_height,
        }


def _combos(states, pictograms, exclude=(), off=False):
    out = {TLClass(s, p) for s in states for p in pictograms} - set(exclude)
    if off:
        out.add(OFF)
    return frozenset(out)


def dtld_class_set() -> frozenset:
    """4 lit states x 5 vehicle pictograms, minus (red_yellow, straight_left), plus off."""
    return _combos(
        LIT_STATES,
        (Pictogram.CIRCLE, Pictogram.STRAIGHT, Pictogram.LEFT, Pictogram.STRAIGHT_LEFT, Pictogram.RIGHT),
        exclude=[TLClass(State.RED_YELLOW, Pictogram.STRAIGHT_LEFT)],
        off=True,
    )


_G, _R, _Y = State.GREEN, State.RED, State.YELLOW

BUILTIN_SCHEMAS = {
    "bstld": DatasetSchema(
        "bstld",
        _combos((_G, _R, _Y), (Pictogram.CIRCLE,), off=True),
        1280,
        720,
    ),
    "lisa": DatasetSchema(
        "lisa",
        _combos((_G, _R, _Y), (Pictogram.CIRCLE,))
        | {TLClass(_G, Pictogram.STRAIGHT)}
        | _combos((_G, _R, _Y), (Pictogram.LEFT,)),
        1280,
        960,
    ),
    "hdtlr": DatasetSchema(
        "hdtlr",
        _combos(LIT_STATES, (Pictogram.CIRCLE, Pictogram.STRAIGHT, Pictogram.LEFT, Pictogram.RIGHT)),
        1280,
        960,
    ),
    "dtld": DatasetSchema("dtld", dtld_class_set(), 2048, 1024),
    # in-vehicle recordings used for fine-tuning; adds both compound arrows
    "realworld": DatasetSchema("realworld", _combos(LIT_STATES, tuple(Pictogram), off=True), 1920, 1200),
}

STATE_CLASSES = frozenset(State)


def _parse_unchecked(label: str) -> TLClass:
    token = label.strip().lower()
    if token == State.OFF.value:
        return OFF
    for prefix in _STATE_PREFIXES:
        if token.startswith(prefix + "_"):
            rest = token[len(prefix) + 1:]
            try:
                pict = Pictogram(rest)
            except ValueError:
                raise SchemaError(f"unknown pictogram {rest!r} in class label {label!r}") from None
            if prefix == State.OFF.value:
                raise SchemaError(f"state off carries no pictogram: {label!r}")
            return TLClass(State(prefix), pict)
        if token == prefix:
            raise SchemaError(f"class label {label!r} is missing a pictogram")
    raise SchemaError(f"unknown state in class label {label!r}")


def parse_class(label: str, schema: Optional[DatasetSchema] = None) -> TLClass:
    c = _parse_unchecked(label)
    if schema is not None and c not in schema.classes:
        raise InvalidCombinationError(f"class {render_class(c)!r} is not part of schema {schema.name!r}")
    return c


def parse_arrow_class(label: str) -> ArrowClass:
    try:
        return ArrowClass(label.strip().lower())
    except ValueError:
        raise SchemaError(f"unknown arrow class {label!r}") from None


def project_to_state(c: ClassKey) -> State:
    if isinstance(c, State):
        return c
    if not isinstance(c, TLClass):
        raise SchemaError(f"cannot project {c!r} to a state")
    return c.state


def schema_from_json(data: dict) -> DatasetSchema:
    try:
        name = str(data["name"])
        labels = data["classes"]
        width = int(data["image_width"])
        height = int(data["image_height"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed schema definition: {exc}") from None
    if width <= 0 or height <= 0:
        raise SchemaError("schema image dimensions must be positive")
    return DatasetSchema(name, frozenset(_parse_unchecked(lbl) for lbl in labels), width, height)


def load_schema(name_or_path: Union[str, Path]) -> DatasetSchema:
    """Resolve a builtin schema name (``dtld``) or a JSON schema file."""
    key = str(name_or_path).lower()
    if key in BUILTIN_SCHEMAS:
        return BUILTIN_SCHEMAS[key]
    path = Path(name_or_path)
    if not path.exists():
        raise SchemaError(
            f"unknown schema {name_or_path!r}; builtin: {', '.join(sorted(BUILTIN_SCHEMAS))}"
        )
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"schema file {path} is not valid JSON: {exc}") from None
    return schema_from_json(data)


def sorted_classes(classes: Iterable[ClassKey]):
    return sorted(classes, key=class_sort_key)
