"""Registry of value-level transforms usable inside target atoms.

Built-ins: identity/1, concat/N (separator configured at registry build),
date_concat/3 (month, day, year -> zero-padded "YYYY-MM-DD"), and lookup/1
against a user-supplied translation table. Lookup misses resolve to NULL and
are logged rather than failing the row.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

logger = logging.getLogger(__name__)


class TransformError(ValueError):
    """Unknown transform, arity mismatch, or a value the transform cannot digest."""


@dataclass(frozen=True)
class _Entry:
    fn: Callable[..., object]
    arity: Optional[int]  # None = variadic (>= 1)


def _coerce_int(value: object, what: str) -> int:
    if isinstance(value, bool):
        raise TransformError(f"{what}: boolean is not a number")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        try:
            return int(value.strip())
        except ValueError:
            raise TransformError(f"{what}: {value!r} is not an integer") from None
    raise TransformError(f"{what}: {value!r} is not an integer")


class TransformRegistry:
    """Name -> function table applied by the chase when emitting target rows."""

    def __init__(
        self,
        lookup_table: Optional[Mapping[str, str]] = None,
        concat_separator: str = "",
    ):
        self._entries: dict[str, _Entry] = {}
        self._lookup_table = dict(lookup_table or {})
        self._concat_separator = concat_separator
        self.register("identity", lambda v: v, arity=1)
        self.register("concat", self._concat, arity=None)
        self.register("date_concat", self._date_concat, arity=3)
        self.register("lookup", self._lookup, arity=1)

    def register(self, name: str, fn: Callable[..., object], arity: Optional[int]) -> None:
        self._entries[name] = _Entry(fn=fn, arity=arity)

    def knows(self, name: str) -> bool:
        return name in self._entries

    def arity(self, name: str) -> Optional[int]:
        if name not in self._entries:
            raise TransformError(f"unknown transform {name!r}")
        return self._entries[name].arity

    def apply(self, name: str, args: Sequence[object]) -> object:
        if name not in self._entries:
            raise TransformError(f"unknown transform {name!r}")
        entry = self._entries[name]
        if entry.arity is not None and len(args) != entry.arity:
            raise TransformError(f"transform {name} expects {entry.arity} arguments, got {len(args)}")
        if entry.arity is None and not args:
            raise TransformError(f"transform {name} expects at least one argument")
        return entry.fn(*args)

    def _concat(self, *parts: object) -> str:
        return self._concat_separator.join("" if p is None else str(p) for p in parts)

    def _date_concat(self, month: object, day: object, year: object) -> str:
        m = _coerce_int(month, "date_concat month")
        d = _coerce_int(day, "date_concat day")
        y = _coerce_int(year, "date_concat year")
        return f"{y:04d}-{m:02d}-{d:02d}"

    def _lookup(self, key: object) -> Optional[str]:
        hit = self._lookup_table.get(str(key))
        if hit is None:
            logger.warning("lookup miss for %r; emitting NULL", key)
        return hit


def apply_transform(name: str, args: Sequence[object], registry: Optional[TransformRegistry] = None) -> object:
    """Apply a registered transform; convenience wrapper over a default registry."""
    return (registry or TransformRegistry()).apply(name, args)
