"""Moment functionals whose expectations are the parameters being estimated.

Each parameter is the population mean of a known function of the data
vector. A parameter can only be estimated from rows in which every component
the function reads is observed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DataError, ParameterError

MomentFunc = Callable[[np.ndarray], np.ndarray]

_CUSTOM_MOMENTS: dict[str, tuple[MomentFunc, tuple[int, ...]]] = {}


def register_moment(tag: str, func: MomentFunc, components) -> None:
    """Register a named moment function for use from config files.

    ``func`` receives a ``(J, Q)`` array and must return a length-``J``
    array. Only the columns listed in ``components`` are guaranteed to be
    observed.
    """
    _CUSTOM_MOMENTS[tag] = (func, tuple(int(c) for c in components))


def registered_moments() -> list[str]:
    return sorted(_CUSTOM_MOMENTS)


@dataclass(frozen=True)
class ParameterDef:
    """One location-type parameter: the mean of ``phi(x)``.

    Parameters
    ----------
    kind : {"mean", "indicator", "product", "custom"}
    components : tuple of int
        Zero-based component indices the functional reads.
    threshold : float, optional
        Cut point for ``kind="indicator"``; the parameter is P(x_q <= t).
    tag : str, optional
        Name for ``kind="custom"``; either registered or given with ``func``.
    func : callable, optional
        Vectorised ``phi`` for custom kinds.
    """

    kind: str
    components: tuple[int, ...]
    threshold: float | None = None
    tag: str | None = None
    func: MomentFunc | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(int(c) for c in self.components))
        if self.kind == "mean" or self.kind == "indicator":
            if len(self.components) != 1:
                raise ParameterError(f"{self.kind} takes exactly one component")
            if self.kind == "indicator" and (
                self.threshold is None or not np.isfinite(self.threshold)
            ):
                raise ParameterError("indicator needs a finite threshold")
        elif self.kind == "product":
            if len(self.components) != 2:
                raise ParameterError("product takes exactly two components")
        elif self.kind == "custom":
            if self.func is None:
                if self.tag not in _CUSTOM_MOMENTS:
                    raise ParameterError(f"unknown custom moment {self.tag!r}")
                func, comps = _CUSTOM_MOMENTS[self.tag]
                object.__setattr__(self, "func", func)
                if not self.components:
                    object.__setattr__(self, "components", comps)
            if not self.components:
                raise ParameterError("custom moment needs its component set")
        else:
            raise ParameterError(f"unknown parameter kind {self.kind!r}")
        if any(c < 0 for c in self.components):
            raise ParameterError("bad parameter definition: negative component")

    @classmethod
    def mean(cls, q):
        return cls("mean", (q,))

    @classmethod
    def indicator(cls, q, threshold):
        return cls("indicator", (q,), threshold=float(threshold))

    @classmethod
    def product(cls, q1, q2):
        return cls("product", (q1, q2))

    @classmethod
    def custom(cls, tag, components=(), func=None):
        return cls("custom", tuple(components), tag=tag, func=func)

    @property
    def required(self) -> frozenset[int]:
        return frozenset(self.components)

    @property
    def label(self) -> str:
        c = ",".join(str(q) for q in self.components)
        if self.kind == "indicator":
            return f"indicator({c}<={self.threshold:g})"
        if self.kind == "custom":
            return f"{self.tag or 'custom'}({c})"
        return f"{self.kind}({c})"

    def evaluate(self, rows: np.ndarray) -> np.ndarray:
        """Return phi for each row of a ``(J, Q)`` array."""
        rows = np.asarray(rows, dtype=float)
        if self.kind == "mean":
            out = rows[:, self.components[0]]
        elif self.kind == "indicator":
            out = (rows[:, self.components[0]] <= self.threshold).astype(float)
        elif self.kind == "product":
            out = rows[:, self.components[0]] * rows[:, self.components[1]]
        else:
            out = np.asarray(self.func(rows), dtype=float).reshape(-1)
        bad = ~np.isfinite(out)
        if bad.any():
            raise DataError(f"bad cell: {self.label} is not finite", row=int(np.argmax(bad)))
        return out


def check_params(params, q: int) -> None:
    if not params:
        raise ParameterError("at least one parameter is required")
    for p in params:
        if max(p.components) >= q:
            raise ParameterError(
                f"bad parameter definition: {p.label} references component "
                f"{max(p.components)} but data has {q}"
            )


def phi_matrix(rows: np.ndarray, params) -> np.ndarray:
    """Stack phi values into a ``(J, len(params))`` array."""
    if not params:
        return np.empty((len(rows), 0))
    return np.column_stack([p.evaluate(rows) for p in params])


register_moment(
    "x3_log_x1x2",
    lambda x: x[:, 2] * np.log(x[:, 0] * x[:, 1]),
    (0, 1, 2),
)
