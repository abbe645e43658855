"""Missing patterns and the parent/child lattice over them.

A pattern is the observedness mask of a row. Patterns with ``i - 1``
unobserved components sit on level ``i``; the complete pattern is the root
(level 1). A child of a pattern has exactly one more component unobserved.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .params import ParameterDef, check_params


@dataclass(frozen=True, order=True)
class MissingPattern:
    """Observedness mask over ``Q`` components (1 = observed)."""

    observed: tuple[bool, ...]

    def __post_init__(self):
        obs = tuple(bool(v) for v in self.observed)
        if not obs:
            raise ValueError("pattern needs at least one component")
        if not any(obs):
            raise ValueError("all-missing pattern is not part of the hierarchy")
        object.__setattr__(self, "observed", obs)

    @classmethod
    def parse(cls, text: str) -> "MissingPattern":
        """Build from a string such as ``"101"`` or ``"(1,0,1)"``."""
        digits = [c for c in text if c in "01"]
        return cls(tuple(c == "1" for c in digits))

    @classmethod
    def complete(cls, q: int) -> "MissingPattern":
        return cls((True,) * q)

    @property
    def q(self) -> int:
        return len(self.observed)

    @property
    def n_missing(self) -> int:
        return self.observed.count(False)

    @property
    def level(self) -> int:
        return self.n_missing + 1

    @property
    def observed_set(self) -> frozenset[int]:
        return frozenset(i for i, o in enumerate(self.observed) if o)

    @property
    def is_complete(self) -> bool:
        return all(self.observed)

    def key(self) -> str:
        return "".join("1" if o else "0" for o in self.observed)

    def __str__(self) -> str:
        return "(" + ",".join("1" if o else "0" for o in self.observed) + ")"


def children(p: MissingPattern) -> list[MissingPattern]:
    """Patterns one level deeper, in lexicographic mask order.

    The all-missing mask is never returned.
    """
    out = []
    for i, o in enumerate(p.observed):
        if o and sum(p.observed) > 1:
            mask = list(p.observed)
            mask[i] = False
            out.append(MissingPattern(tuple(mask)))
    return sorted(out)


def monotone_child(p: MissingPattern) -> list[MissingPattern]:
    """The single dropout-chain child: the last observed component removed."""
    obs = [i for i, o in enumerate(p.observed) if o]
    if len(obs) < 2:
        return []
    mask = list(p.observed)
    mask[obs[-1]] = False
    return [MissingPattern(tuple(mask))]


def estimable(p: MissingPattern, params: Sequence[ParameterDef]) -> list[int]:
    """Indices of ``params`` computable from rows with pattern ``p``."""
    check_params(params, p.q)
    seen = p.observed_set
    return [s for s, prm in enumerate(params) if prm.required <= seen]


@dataclass
class Dataset:
    """Rectangular data with NaN marking missing cells."""

    values: np.ndarray
    columns: tuple[str, ...] = field(default=())

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise DataError("malformed data: expected a 2-d table")
        if np.isinf(vals).any():
            r, c = np.argwhere(np.isinf(vals))[0]
            raise DataError("bad cell: infinite value", row=int(r), column=int(c))
        self.values = vals
        if not self.columns:
            self.columns = tuple(f"x{i + 1}" for i in range(vals.shape[1]))
        self.columns = tuple(self.columns)
        if len(self.columns) != vals.shape[1]:
            raise DataError("column names do not match the data width")

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence[float | None]], columns=()) -> "Dataset":
        """Build from records whose missing cells are ``None`` or NaN."""
        rows = list(rows)
        if not rows:
            raise DataError("no data")
        q = len(columns) if columns else len(rows[0])
        out = np.empty((len(rows), q))
        for n, row in enumerate(rows):
            if len(row) != q:
                raise DataError("malformed row", row=n)
            out[n] = [np.nan if v is None else float(v) for v in row]
        return cls(out, tuple(columns))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def q(self) -> int:
        return self.values.shape[1]

    def scaled(self, c: float) -> "Dataset":
        return Dataset(self.values * c, self.columns)


@dataclass
class PatternPartition:
    """Row indices grouped by observedness mask; empty patterns are absent."""

    groups: dict[MissingPattern, np.ndarray]
    dropped: int
    n_rows: int

    def sizes(self) -> dict[MissingPattern, int]:
        return {p: len(ix) for p, ix in self.groups.items()}

    def by_level(self) -> dict[int, list[MissingPattern]]:
        out: dict[int, list[MissingPattern]] = {}
        for p in sorted(self.groups):
            out.setdefault(p.level, []).append(p)
        return out


def partition(dataset: Dataset) -> PatternPartition:
    """Split rows by missing pattern; all-missing rows are only counted."""
    vals = dataset.values
    if vals.shape[0] == 0:
        raise DataError("no data")
    if vals.shape[1] == 0:
        raise DataError("malformed data: no columns")
    observed = ~np.isnan(vals)
    keep = observed.any(axis=1)
    masks, inverse = np.unique(observed[keep], axis=0, return_inverse=True)
    rows = np.flatnonzero(keep)
    inverse = np.asarray(inverse).reshape(-1)
    groups = {}
    for k, mask in enumerate(masks):
        groups[MissingPattern(tuple(mask))] = rows[inverse == k]
    return PatternPartition(
        groups=dict(sorted(groups.items(), reverse=True)),
        dropped=int((~keep).sum()),
        n_rows=int(vals.shape[0]),
    )
