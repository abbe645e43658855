"""CDF estimation from right-censored data by recursive information absorption.

At each event time the CDF estimate from rows still informative at that time
is corrected with the already-corrected estimate at the previous event time.
With empirical plug-ins the correction reduces to a survival ratio update,
which reproduces the classical product-limit curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, EstimationError, NoEventsError


@dataclass
class CensoredSample:
    """Observed times with event flags (``False`` = censored at that time)."""

    time: np.ndarray
    event: np.ndarray

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float).reshape(-1)
        self.event = np.asarray(self.event, dtype=bool).reshape(-1)
        if self.time.shape != self.event.shape:
            raise DataError("time and event lengths differ")
        if not np.all(np.isfinite(self.time)):
            raise DataError("bad cell: non-finite time", row=int(np.argmax(~np.isfinite(self.time))))
        if np.any(self.time <= 0):
            raise DataError("bad cell: time must be positive", row=int(np.argmax(self.time <= 0)))

    @classmethod
    def from_pairs(cls, pairs):
        pairs = list(pairs)
        if not pairs:
            return cls(np.empty(0), np.empty(0, dtype=bool))
        t, e = zip(*pairs)
        return cls(np.array(t, dtype=float), np.array(e, dtype=bool))

    def __len__(self):
        return len(self.time)


@dataclass
class StepCdf:
    knots: np.ndarray
    values: np.ndarray

    @property
    def survival(self) -> np.ndarray:
        return 1.0 - self.values

    def __call__(self, t) -> np.ndarray:
        """Right-continuous evaluation; 0 before the first knot."""
        idx = np.searchsorted(self.knots, np.asarray(t, dtype=float), side="right")
        vals = np.concatenate([[0.0], self.values])
        return vals[idx]


def _event_times(sample: CensoredSample) -> np.ndarray:
    knots = np.unique(sample.time[sample.event])
    if knots.size == 0:
        raise NoEventsError("no estimable CDF: sample has no events")
    return knots


def _ecdf(y: np.ndarray, ev: np.ndarray, t: float) -> float:
    # a censored value sits just after its recorded time
    below = np.where(ev, y <= t, y < t)
    return np.count_nonzero(below) / y.size


def recursive_cdf(sample: CensoredSample) -> StepCdf:
    """Recursively corrected CDF at each distinct event time.

    Step ``s`` uses every event plus every censoring not before ``t_s``.
    A censoring tied with ``t_s`` stays in the step-``s`` subsample, i.e. it
    is treated as occurring just after the event.
    """
    knots = _event_times(sample)
    y, ev = sample.time, sample.event
    out = np.empty(knots.size)
    for s, t in enumerate(knots):
        keep = ev | (y >= t)
        y_s, ev_s = y[keep], ev[keep]
        f_t = _ecdf(y_s, ev_s, t)
        if s == 0:
            out[s] = f_t
            continue
        f_prev = _ecdf(y_s, ev_s, knots[s - 1])
        if f_prev >= 1.0:
            out[s] = out[s - 1]
            continue
        ratio = (1.0 - f_t) / (1.0 - f_prev)
        out[s] = 1.0 - ratio * (1.0 - out[s - 1])
    return StepCdf(knots, np.clip(out, 0.0, 1.0))


def product_limit(sample: CensoredSample) -> StepCdf:
    """Kaplan-Meier estimate, returned as a CDF."""
    knots = _event_times(sample)
    surv = 1.0
    out = np.empty(knots.size)
    for s, t in enumerate(knots):
        at_risk = np.count_nonzero(sample.time >= t)
        d = np.count_nonzero((sample.time == t) & sample.event)
        surv *= 1.0 - d / at_risk
        out[s] = 1.0 - surv
    return StepCdf(knots, out)


def pooled_variance_combine(var_a: float, var_b: float) -> tuple[float, float, float]:
    """Minimum-variance weights for two independent unbiased estimates.

    Returns ``(weight_a, weight_b, combined_variance)``; the combined
    information is the sum of the two informations.
    """
    if not (var_a > 0 and var_b > 0) or not (np.isfinite(var_a) and np.isfinite(var_b)):
        raise EstimationError("invalid variance")
    total = var_a + var_b
    return var_b / total, var_a / total, var_a * var_b / total


def max_deviation(a: StepCdf, b: StepCdf) -> float:
    if a.knots.shape != b.knots.shape or not np.array_equal(a.knots, b.knots):
        raise ValueError("step functions have different knots")
    return float(np.max(np.abs(a.values - b.values)))
