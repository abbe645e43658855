"""Monte Carlo studies of the corrected estimators under controlled missingness.

Replicate ``r`` of a study with master seed ``seed`` draws from
``numpy.random.default_rng(SeedSequence(seed, spawn_key=(r,)))``, so every
replicate can be regenerated on its own and serial and parallel runs agree
bit for bit. Aggregation always happens over the full, replicate-ordered
arrays.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .bivariate import (
    BivariateConfig,
    change_score,
    complete_pair_variance,
    incomplete_pair_variance,
    mean_vector,
    nonignorable_shift,
    subsample_summary,
)
from .errors import EstimationError, HiermissError
from .estimator import KnownCovariance, PluginCovariance, hierarchical_estimate
from .params import ParameterDef
from .patterns import Dataset, MissingPattern

_CHUNK = 2000


class InvalidPopulation(HiermissError):
    pass


@dataclass(frozen=True)
class Population:
    """Multivariate normal population."""

    mean: tuple[float, ...]
    cov: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        mean = tuple(float(v) for v in self.mean)
        cov = tuple(tuple(float(v) for v in row) for row in self.cov)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        c = np.array(cov)
        if c.shape != (len(mean), len(mean)) or not np.allclose(c, c.T):
            raise InvalidPopulation("invalid population: covariance shape or symmetry")
        try:
            np.linalg.cholesky(c)
        except np.linalg.LinAlgError as exc:
            raise InvalidPopulation("invalid population: covariance not positive definite") from exc

    @property
    def q(self) -> int:
        return len(self.mean)

    @property
    def mu(self) -> np.ndarray:
        return np.array(self.mean)

    @property
    def sigma(self) -> np.ndarray:
        return np.array(self.cov)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = rng.standard_normal((n, self.q))
        return self.mu + z @ np.linalg.cholesky(self.sigma).T


def _pattern_table(patterns, q):
    masks, probs = [], []
    for key, prob in patterns.items():
        mask = key.observed if isinstance(key, MissingPattern) else tuple(
            c == "1" for c in str(key) if c in "01"
        )
        if len(mask) != q:
            raise InvalidPopulation(f"pattern {key!r} does not have {q} components")
        if not 0.0 <= float(prob) <= 1.0:
            raise InvalidPopulation(f"pattern probability {prob} outside [0, 1]")
        masks.append(mask)
        probs.append(float(prob))
    if not math.isclose(sum(probs), 1.0, abs_tol=1e-9):
        raise InvalidPopulation("pattern probabilities must sum to 1")
    return np.array(masks, dtype=bool), np.array(probs) / sum(probs)


@dataclass(frozen=True)
class MCAR:
    """Each row independently takes a pattern with fixed probabilities.

    ``patterns`` maps masks such as ``"10"`` (first observed, second
    missing) to probabilities.
    """

    patterns: dict

    def apply(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        masks, probs = _pattern_table(self.patterns, x.shape[1])
        pick = rng.choice(len(probs), size=x.shape[0], p=probs)
        return np.where(masks[pick], x, np.nan)

    def to_dict(self):
        return {"type": "mcar", "patterns": {_key(k): v for k, v in self.patterns.items()}}


@dataclass(frozen=True)
class MonotoneDropout:
    """Components leave in column order; a row drops at step k w.p. ``dropout[k]``."""

    dropout: float | tuple[float, ...]

    def steps(self, q):
        d = self.dropout
        d = (float(d),) * (q - 1) if np.isscalar(d) else tuple(float(v) for v in d)
        if len(d) != q - 1 or any(not 0 <= v <= 1 for v in d):
            raise InvalidPopulation("dropout needs Q-1 probabilities in [0, 1]")
        return np.array(d)

    def apply(self, x, rng):
        n, q = x.shape
        p = self.steps(q)
        drops = rng.random((n, q - 1)) < p
        # first step at which the row leaves; q - 1 means it never does
        first = np.where(drops.any(axis=1), drops.argmax(axis=1), q - 1)
        keep = np.arange(q)[None, :] <= first[:, None]
        return np.where(keep, x, np.nan)

    def to_dict(self):
        d = self.dropout
        return {"type": "monotone", "dropout": d if np.isscalar(d) else list(d)}


@dataclass(frozen=True)
class DeltaShift:
    """MCAR patterns plus a shift added to every observed cell of incomplete rows."""

    patterns: dict
    shift: float

    def apply(self, x, rng):
        if not np.isfinite(self.shift):
            raise InvalidPopulation("shift must be finite")
        y = MCAR(self.patterns).apply(x, rng)
        incomplete = np.isnan(y).any(axis=1)
        y[incomplete] += self.shift
        return y

    def to_dict(self):
        return {
            "type": "delta_shift",
            "patterns": {_key(k): v for k, v in self.patterns.items()},
            "shift": self.shift,
        }


def _key(k):
    return k.key() if isinstance(k, MissingPattern) else str(k)


def mechanism_from_dict(d: dict):
    kind = d.get("type")
    if kind == "mcar":
        return MCAR(dict(d["patterns"]))
    if kind == "monotone":
        dr = d["dropout"]
        return MonotoneDropout(dr if np.isscalar(dr) else tuple(dr))
    if kind in ("delta_shift", "delta-shift"):
        return DeltaShift(dict(d["patterns"]), float(d["shift"]))
    raise InvalidPopulation(f"unknown mechanism {kind!r}")


@dataclass(frozen=True)
class Tolerances:
    mean_se: float = 4.0
    variance_rel: float = 0.02


@dataclass(frozen=True)
class StudySpec:
    population: Population
    mechanism: MCAR | MonotoneDropout | DeltaShift
    n: int
    replicates: int
    estimators: tuple[str, ...]
    seed: int
    tolerances: Tolerances = Tolerances()
    expect_biased: tuple[str, ...] = ()

    def __post_init__(self):
        if self.n < 2 or self.replicates < 1:
            raise InvalidPopulation("need N >= 2 and at least one replicate")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise InvalidPopulation(f"unknown estimators {unknown}")
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "expect_biased", tuple(self.expect_biased))

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None) -> "StudySpec":
        seed = d.get("seed") if seed is None else seed
        if seed is None:
            raise InvalidPopulation("a seed is required")
        pop = d["population"]
        return cls(
            population=Population(tuple(pop["mean"]), tuple(map(tuple, pop["cov"]))),
            mechanism=mechanism_from_dict(d["mechanism"]),
            n=int(d["n"]),
            replicates=int(d["replicates"]),
            estimators=tuple(d["estimators"]),
            seed=int(seed),
            tolerances=Tolerances(**d.get("tolerances", {})),
            expect_biased=tuple(d.get("expect_biased", ())),
        )

    def to_dict(self) -> dict:
        return {
            "population": {"mean": list(self.population.mean), "cov": [list(r) for r in self.population.cov]},
            "mechanism": self.mechanism.to_dict(),
            "n": self.n,
            "replicates": self.replicates,
            "estimators": list(self.estimators),
            "seed": self.seed,
            "tolerances": {"mean_se": self.tolerances.mean_se, "variance_rel": self.tolerances.variance_rel},
            "expect_biased": list(self.expect_biased),
        }


def replicate_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))


def draw_values(spec: StudySpec, r: int) -> np.ndarray:
    rng = replicate_rng(spec.seed, r)
    x = spec.population.draw(rng, spec.n)
    return spec.mechanism.apply(x, rng)


def generate(spec: StudySpec, r: int) -> Dataset:
    """The ``r``-th replicate dataset; depends only on ``(spec, r)``."""
    return Dataset(draw_values(spec, r))


# Estimators ---------------------------------------------------------------
#
# Each returns (estimate, theoretical variance per coordinate or None,
# fallback flag) and raises EstimationError when the replicate cannot
# support it.


@dataclass(frozen=True)
class EstimatorDef:
    labels: Callable[[Population], list[str]]
    target: Callable[[Population], np.ndarray]
    run: Callable[[np.ndarray, Population], tuple]
    bivariate: bool = False


def _mean_labels(pop):
    return [f"mu{q + 1}" for q in range(pop.q)]


def _complete_case(x, pop):
    rows = x[~np.isnan(x).any(axis=1)]
    if rows.shape[0] < 1:
        raise EstimationError("no complete cases")
    return rows.mean(axis=0), np.diag(pop.sigma) / rows.shape[0], False


def _available_case(x, pop):
    obs = ~np.isnan(x)
    counts = obs.sum(axis=0)
    if (counts < 1).any():
        raise EstimationError("a component is never observed")
    return np.nansum(x, axis=0) / counts, np.diag(pop.sigma) / counts, False


def _mean_params(q):
    return [ParameterDef.mean(i) for i in range(q)]


def _hier_known(x, pop):
    res = hierarchical_estimate(Dataset(x), _mean_params(pop.q), KnownCovariance(pop.sigma))
    return res.theta, np.diag(res.cov), res.fallbacks > 0


def _hier_plugin(x, pop):
    res = hierarchical_estimate(Dataset(x), _mean_params(pop.q), PluginCovariance())
    return res.theta, None, res.fallbacks > 0


def _cfg(x, pop):
    means, (J11, J21, J22) = subsample_summary(x)
    s = pop.sigma
    return means, BivariateConfig(s[0, 0], s[1, 1], s[0, 1], J11, J21, J22)


def _sizes_ok(J11=0, J21=0, J22=0, cfg=None):
    if cfg.J11 < J11 or cfg.J21 < J21 or cfg.J22 < J22:
        raise EstimationError("subsample too small for this estimator")


def _delta_cc(x, pop):
    means, cfg = _cfg(x, pop)
    _sizes_ok(1, cfg=cfg)
    return np.array([means.x111 - means.x112]), np.array([complete_pair_variance(cfg)]), False


def _delta_change(x, pop):
    means, cfg = _cfg(x, pop)
    _sizes_ok(1, cfg=cfg)
    d, v = change_score(means, cfg)
    return np.array([d]), np.array([v]), False


def _delta_incomplete(x, pop):
    means, cfg = _cfg(x, pop)
    _sizes_ok(0, 1, 1, cfg=cfg)
    return np.array([means.x211 - means.x222]), np.array([incomplete_pair_variance(cfg)]), False


def _delta_shift(x, pop):
    means, cfg = _cfg(x, pop)
    _sizes_ok(1, 1, 1, cfg=cfg)
    d, v = nonignorable_shift(means, cfg)
    return np.array([d]), np.array([v]), False


def _mean_vector(x, pop):
    means, cfg = _cfg(x, pop)
    _sizes_ok(1, 1, 1, cfg=cfg)
    mu, cov = mean_vector(means, cfg)
    return mu, np.diag(cov), False


def _delta_target(pop):
    return np.array([pop.mu[0] - pop.mu[1]])


ESTIMATORS: dict[str, EstimatorDef] = {
    "complete_case": EstimatorDef(_mean_labels, lambda p: p.mu, _complete_case),
    "available_case": EstimatorDef(_mean_labels, lambda p: p.mu, _available_case),
    "hierarchical_known": EstimatorDef(_mean_labels, lambda p: p.mu, _hier_known),
    "hierarchical_plugin": EstimatorDef(_mean_labels, lambda p: p.mu, _hier_plugin),
    "mean_vector": EstimatorDef(_mean_labels, lambda p: p.mu, _mean_vector, True),
    "change_score_complete": EstimatorDef(lambda p: ["delta"], _delta_target, _delta_cc, True),
    "change_score": EstimatorDef(lambda p: ["delta"], _delta_target, _delta_change, True),
    "incomplete_pairs": EstimatorDef(lambda p: ["delta"], _delta_target, _delta_incomplete, True),
    "shift_adjusted": EstimatorDef(lambda p: ["delta"], _delta_target, _delta_shift, True),
}


def _run_chunk(spec: StudySpec, start: int, stop: int) -> dict:
    pop = spec.population
    out = {}
    for name in spec.estimators:
        dim = len(ESTIMATORS[name].labels(pop))
        out[name] = (
            np.full((stop - start, dim), np.nan),
            np.full((stop - start, dim), np.nan),
            np.zeros(stop - start, dtype=np.int8),
        )
    for i, r in enumerate(range(start, stop)):
        x = draw_values(spec, r)
        for name in spec.estimators:
            est, theory, status = out[name]
            try:
                val, var, fellback = ESTIMATORS[name].run(x, pop)
            except EstimationError:
                status[i] = 2
                continue
            est[i] = val
            if var is not None:
                theory[i] = var
            status[i] = 1 if fellback else 0
    return out


def _chunks(total, size=_CHUNK):
    return [(a, min(a + size, total)) for a in range(0, total, size)]


def _collect(spec: StudySpec, workers: int | None, runner=_run_chunk) -> dict:
    bounds = _chunks(spec.replicates)
    if workers and workers > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(runner, [spec] * len(bounds), *zip(*bounds)))
    else:
        parts = [runner(spec, a, b) for a, b in bounds]
    merged = {}
    for key in parts[0]:
        merged[key] = tuple(np.concatenate([p[key][k] for p in parts]) for k in range(len(parts[0][key])))
    return merged


@dataclass
class EstimatorSummary:
    name: str
    labels: list[str]
    target: np.ndarray
    n_ok: int
    n_failed: int
    n_fallback: int
    mean: np.ndarray
    bias: np.ndarray
    cov: np.ndarray
    mc_se_mean: np.ndarray
    variance: np.ndarray
    mc_se_variance: np.ndarray
    theory_variance: np.ndarray | None
    unbiased: list[bool]
    variance_ok: list[bool] | None
    expect_biased: bool = False

    @property
    def bias_z(self) -> np.ndarray:
        return np.abs(self.bias) / self.mc_se_mean

    @property
    def variance_rel_error(self) -> np.ndarray | None:
        if self.theory_variance is None:
            return None
        return self.variance / self.theory_variance - 1.0

    @property
    def passed(self) -> bool:
        ok = all(not u for u in self.unbiased) if self.expect_biased else all(self.unbiased)
        return ok and (self.variance_ok is None or all(self.variance_ok))

    def to_dict(self) -> dict:
        def lst(a):
            return None if a is None else [_num(v) for v in np.asarray(a).ravel()]

        rel = self.variance_rel_error
        return {
            "labels": self.labels,
            "target": lst(self.target),
            "n_ok": self.n_ok,
            "n_failed": self.n_failed,
            "n_fallback": self.n_fallback,
            "mean": lst(self.mean),
            "bias": lst(self.bias),
            "mc_se_mean": lst(self.mc_se_mean),
            "covariance": [lst(row) for row in np.atleast_2d(self.cov)],
            "variance": lst(self.variance),
            "mc_se_variance": lst(self.mc_se_variance),
            "theory_variance": lst(self.theory_variance),
            "variance_rel_error": lst(rel),
            "unbiased": list(self.unbiased),
            "variance_ok": self.variance_ok,
            "expect_biased": self.expect_biased,
            "passed": self.passed,
        }


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass
class StudyReport:
    spec: StudySpec
    estimators: dict[str, EstimatorSummary]
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.estimators.values())

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "estimators": {k: v.to_dict() for k, v in self.estimators.items()},
            "passed": self.passed,
        }


def summarize(name, est, theory, status, spec: StudySpec) -> EstimatorSummary:
    pop = spec.population
    ok = status < 2
    x = est[ok]
    r = x.shape[0]
    target = ESTIMATORS[name].target(pop)
    if r < 2:
        nan = np.full(len(target), np.nan)
        return EstimatorSummary(
            name, ESTIMATORS[name].labels(pop), target, r, int((~ok).sum()),
            int((status == 1).sum()), nan, nan, np.full((len(target),) * 2, np.nan),
            nan, nan, nan, None, [False] * len(target), None, name in spec.expect_biased,
        )
    mean = x.mean(axis=0)
    dev = x - mean
    cov = np.atleast_2d(dev.T @ dev / (r - 1))
    var = np.diag(cov)
    se_mean = np.sqrt(var / r)
    m4 = (dev**4).mean(axis=0)
    se_var = np.sqrt(np.maximum(m4 - var**2, 0.0) / r)
    th = theory[ok]
    theory_var = None if np.isnan(th).all() else th.mean(axis=0)
    tol = spec.tolerances
    bias = mean - target
    unbiased = [bool(v) for v in np.abs(bias) <= tol.mean_se * se_mean]
    variance_ok = None
    if theory_var is not None:
        variance_ok = [bool(v) for v in np.abs(var / theory_var - 1.0) <= tol.variance_rel]
    return EstimatorSummary(
        name, ESTIMATORS[name].labels(pop), target, r, int((~ok).sum()),
        int((status == 1).sum()), mean, bias, cov, se_mean, var, se_var,
        theory_var, unbiased, variance_ok, name in spec.expect_biased,
    )


def run_study(spec: StudySpec, workers: int | None = None) -> StudyReport:
    """Run every replicate, apply each estimator, and aggregate.

    A replicate where an estimator cannot be formed is counted in
    ``n_failed`` and excluded from that estimator's moments.
    """
    raw = _collect(spec, workers)
    summaries = {
        name: summarize(name, *raw[name], spec) for name in spec.estimators
    }
    return StudyReport(spec, summaries, raw)


# Convergence of the plug-in gain ------------------------------------------


@dataclass
class ProbeRow:
    n: int
    gain_error: float
    variance_ratio: float
    n_used: int


def _probe_chunk(args, start, stop):
    spec, compare_mode = args
    pop = spec.population
    params = _mean_params(pop.q)
    known = KnownCovariance(pop.sigma)
    other = compare_mode if compare_mode is not None else PluginCovariance()
    est_k = np.full((stop - start, pop.q), np.nan)
    est_p = np.full((stop - start, pop.q), np.nan)
    err = np.full(stop - start, np.nan)
    for i, r in enumerate(range(start, stop)):
        ds = Dataset(draw_values(spec, r))
        try:
            rk = hierarchical_estimate(ds, params, known)
            rp = hierarchical_estimate(ds, params, other)
        except EstimationError:
            continue
        est_k[i], est_p[i] = rk.theta, rp.theta
        gk, gp = rk.root.provenance.gain, rp.root.provenance.gain
        if (
            gk is not None
            and gp is not None
            and gk.shape == gp.shape
            and rk.root.provenance.children == rp.root.provenance.children
        ):
            err[i] = np.linalg.norm(gp - gk)
    return {"probe": (est_k, est_p, err)}


def convergence_probe(
    spec: StudySpec,
    ladder: Sequence[int],
    compare_mode=None,
    workers: int | None = None,
) -> list[ProbeRow]:
    """Plug-in versus known-covariance gains and variances along a size ladder.

    For each ``N`` reports the mean Frobenius distance between the root gain
    matrices and the ratio of the traces of the two estimators' empirical
    covariances.
    """
    ladder = list(ladder)
    if len(ladder) < 3:
        raise InvalidPopulation("ladder too short: need at least three sizes")
    rows = []
    for n in ladder:
        sub = replace(spec, n=int(n))
        bounds = _chunks(sub.replicates)
        args = (sub, compare_mode)
        if workers and workers > 1 and len(bounds) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(_probe_chunk, [args] * len(bounds), *zip(*bounds)))
        else:
            parts = [_probe_chunk(args, a, b) for a, b in bounds]
        est_k = np.concatenate([p["probe"][0] for p in parts])
        est_p = np.concatenate([p["probe"][1] for p in parts])
        err = np.concatenate([p["probe"][2] for p in parts])
        ok = ~np.isnan(est_k).any(axis=1) & ~np.isnan(est_p).any(axis=1)
        var_k = np.trace(np.atleast_2d(np.cov(est_k[ok], rowvar=False)))
        var_p = np.trace(np.atleast_2d(np.cov(est_p[ok], rowvar=False)))
        rows.append(
            ProbeRow(int(n), float(np.nanmean(err)), float(var_p / var_k), int(ok.sum()))
        )
    return rows
