"""Hierarchical variance-optimal correction of pattern-wise moment estimates.

Every missing pattern yields its own sample-mean estimate of the parameters
it can see. Working from the most-missing level up to the complete cases,
each pattern's estimate is corrected by the discrepancy between its own view
of the parameters it shares with each child pattern and the child's already
corrected estimate::

    theta_tilde = theta_hat - K K*^{-1} (b_hat - b_tilde)
    cov_tilde   = cov_hat   - K K*^{-1} K^T

``K`` is the covariance between ``theta_hat`` and the stacked shared
sub-vector ``b_hat``; ``K*`` is ``Cov(b_hat) + blockdiag(Cov(b_tilde))``.
Disjoint subsamples of i.i.d. rows make ``b_hat`` and ``b_tilde``
uncorrelated, which is what makes the gain optimal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import EstimationError, NoCompleteCasesError, ParameterError
from .params import ParameterDef, check_params, phi_matrix
from .patterns import (
    Dataset,
    MissingPattern,
    PatternPartition,
    children,
    estimable,
    monotone_child,
    partition,
)

log = logging.getLogger(__name__)

PD_EPS = 1e-10


class NoCorrection(EstimationError):
    """A node has no child information to absorb."""


class KnownCovariance:
    """Covariance mode backed by the population covariance of the phi values.

    ``phi_cov[s, r]`` must equal ``Cov(phi_s(X), phi_r(X))`` over the full
    parameter list; a subsample of size ``J`` then has
    ``Cov(theta_hat) = phi_cov / J`` on its estimable indices.
    """

    name = "known"

    def __init__(self, phi_cov):
        phi_cov = np.atleast_2d(np.asarray(phi_cov, dtype=float))
        if phi_cov.shape[0] != phi_cov.shape[1]:
            raise ParameterError("known covariance must be square")
        if not np.allclose(phi_cov, phi_cov.T, rtol=1e-12, atol=1e-14):
            raise ParameterError("known covariance must be symmetric")
        eig = np.linalg.eigvalsh(phi_cov)
        if eig.min() < -1e-10 * max(1.0, abs(eig).max()):
            raise ParameterError("known covariance must be positive semidefinite")
        self.phi_cov = 0.5 * (phi_cov + phi_cov.T)

    def subsample_cov(self, phi: np.ndarray, ids: list[int]) -> np.ndarray:
        if self.phi_cov.shape[0] <= max(ids, default=-1):
            raise ParameterError("known covariance is smaller than the parameter list")
        return self.phi_cov[np.ix_(ids, ids)] / phi.shape[0]


class PluginCovariance:
    """Covariance mode using the sample covariance of the phi values over J."""

    name = "plugin"

    def subsample_cov(self, phi: np.ndarray, ids: list[int]) -> np.ndarray:
        j = phi.shape[0]
        if j < 2:
            raise EstimationError("covariance inestimable: subsample has one row")
        return np.atleast_2d(np.cov(phi, rowvar=False, ddof=1)) / j


def make_mode(mode, phi_cov=None):
    """Resolve ``"known"``/``"plugin"`` strings to mode objects."""
    if isinstance(mode, (KnownCovariance, PluginCovariance)):
        return mode
    if mode == "known":
        if phi_cov is None:
            raise ParameterError("known mode needs the phi covariance matrix")
        return KnownCovariance(phi_cov)
    if mode in ("plugin", "plug-in"):
        return PluginCovariance()
    raise ParameterError(f"unknown covariance mode {mode!r}")


@dataclass
class SubsampleEstimate:
    pattern: MissingPattern
    param_ids: list[int]
    theta_hat: np.ndarray
    cov_hat: np.ndarray
    J: int


@dataclass
class Provenance:
    """How a node's corrected estimate came about."""

    children: list[MissingPattern] = field(default_factory=list)
    skipped: dict[MissingPattern, str] = field(default_factory=dict)
    fallback: str | None = None
    overlapping: bool = False
    sources: frozenset = frozenset()
    gain: np.ndarray | None = None

    def as_dict(self) -> dict:
        return {
            "children": [str(c) for c in self.children],
            "skipped": {str(k): v for k, v in self.skipped.items()},
            "fallback": self.fallback,
            "overlapping_sources": self.overlapping,
        }


@dataclass
class UpdatedEstimate:
    pattern: MissingPattern
    param_ids: list[int]
    theta_tilde: np.ndarray
    cov_tilde: np.ndarray
    J: int
    provenance: Provenance = field(default_factory=Provenance)


@dataclass
class CorrectionBlocks:
    """Stacked shared sub-vectors of a parent and its corrected children.

    ``parent_coords[k]`` is the position in ``parent.theta_hat`` feeding
    stacked coordinate ``k``; ``index_map[k]`` is ``(child, param_id)``.
    """

    b_hat: np.ndarray
    b_tilde: np.ndarray
    b_tilde_cov: np.ndarray
    index_map: list[tuple[MissingPattern, int]]
    parent_coords: np.ndarray
    children: list[MissingPattern]


@dataclass
class GainSystem:
    K: np.ndarray
    K_star: np.ndarray


def subsample_estimate(
    rows: np.ndarray,
    pattern: MissingPattern,
    params: Sequence[ParameterDef],
    mode,
) -> SubsampleEstimate:
    """Sample means of the estimable phi values and their covariance."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[0] < 1:
        raise EstimationError("empty subsample")
    ids = estimable(pattern, params)
    phi = phi_matrix(rows, [params[s] for s in ids])
    theta = phi.mean(axis=0)
    cov = mode.subsample_cov(phi, ids) if ids else np.empty((0, 0))
    return SubsampleEstimate(pattern, ids, theta, cov, rows.shape[0])


def as_updated(est: SubsampleEstimate, fallback: str | None = None) -> UpdatedEstimate:
    return UpdatedEstimate(
        est.pattern,
        list(est.param_ids),
        est.theta_hat.copy(),
        est.cov_hat.copy(),
        est.J,
        Provenance(fallback=fallback, sources=frozenset([est.pattern])),
    )


def assemble_blocks(
    parent: SubsampleEstimate, child_updates: Sequence[UpdatedEstimate]
) -> CorrectionBlocks:
    """One block per child: the parameters both the parent and child estimate."""
    pos = {s: k for k, s in enumerate(parent.param_ids)}
    b_hat, b_tilde, coords, index_map, covs, used = [], [], [], [], [], []
    for child in sorted(child_updates, key=lambda u: u.pattern):
        shared = [(k, s) for k, s in enumerate(child.param_ids) if s in pos]
        if not shared:
            continue
        ck = [k for k, _ in shared]
        for k, s in shared:
            coords.append(pos[s])
            b_hat.append(parent.theta_hat[pos[s]])
            b_tilde.append(child.theta_tilde[k])
            index_map.append((child.pattern, s))
        covs.append(child.cov_tilde[np.ix_(ck, ck)])
        used.append(child.pattern)
    if not used:
        raise NoCorrection("no correction possible")
    n = len(b_hat)
    block_cov = np.zeros((n, n))
    at = 0
    for c in covs:
        m = c.shape[0]
        block_cov[at : at + m, at : at + m] = c
        at += m
    return CorrectionBlocks(
        np.array(b_hat),
        np.array(b_tilde),
        block_cov,
        index_map,
        np.array(coords, dtype=int),
        used,
    )


def gain_system(parent: SubsampleEstimate, blocks: CorrectionBlocks) -> GainSystem:
    """Covariances feeding the gain.

    ``b_hat`` is a coordinate selection of ``theta_hat``, so ``K`` and the
    ``b_hat`` part of ``K*`` are read straight off ``cov_hat``.
    """
    c = blocks.parent_coords
    K = parent.cov_hat[:, c]
    K_star = parent.cov_hat[np.ix_(c, c)] + blocks.b_tilde_cov
    return GainSystem(K, 0.5 * (K_star + K_star.T))


def passes_pd_gate(K_star: np.ndarray, eps: float = PD_EPS) -> bool:
    """Minimum eigenvalue must exceed ``eps * trace / L``."""
    if K_star.size == 0 or not np.all(np.isfinite(K_star)):
        return False
    if not np.allclose(K_star, K_star.T, rtol=1e-12, atol=0.0):
        return False
    tr = np.trace(K_star)
    if tr <= 0:
        return False
    return np.linalg.eigvalsh(K_star)[0] > eps * tr / K_star.shape[0]


def update(
    parent: SubsampleEstimate, blocks: CorrectionBlocks, gains: GainSystem
) -> UpdatedEstimate:
    """Apply the optimal gain; fall back to the parent if ``K*`` fails the gate."""
    if not passes_pd_gate(gains.K_star):
        log.debug("K* failed the positive-definiteness gate at %s", parent.pattern)
        return as_updated(parent, fallback="fallback: singular K*")
    G = cho_solve(cho_factor(gains.K_star), gains.K.T).T
    theta = parent.theta_hat - G @ (blocks.b_hat - blocks.b_tilde)
    cov = parent.cov_hat - G @ gains.K.T
    prov = Provenance(children=list(blocks.children), gain=G)
    return UpdatedEstimate(
        parent.pattern, list(parent.param_ids), theta, 0.5 * (cov + cov.T), parent.J, prov
    )


def correct_node(
    parent: SubsampleEstimate, child_updates: Sequence[UpdatedEstimate]
) -> UpdatedEstimate:
    """Assemble, solve and update one node; no children leaves it unchanged."""
    try:
        blocks = assemble_blocks(parent, child_updates)
    except NoCorrection:
        return as_updated(parent)
    out = update(parent, blocks, gain_system(parent, blocks))
    if out.provenance.fallback is None:
        srcs = {u.pattern: u.provenance.sources for u in child_updates}
        used = [srcs[c] for c in blocks.children]
        out.provenance.overlapping = any(a & b for a, b in combinations(used, 2))
        out.provenance.sources = frozenset([parent.pattern]).union(*used)
    return out


@dataclass
class HierarchicalResult:
    """Root estimate plus every node's corrected estimate."""

    root: UpdatedEstimate
    nodes: dict[MissingPattern, UpdatedEstimate]
    partition: PatternPartition
    params: list[ParameterDef]

    @property
    def theta(self) -> np.ndarray:
        return self.root.theta_tilde

    @property
    def cov(self) -> np.ndarray:
        return self.root.cov_tilde

    @property
    def fallbacks(self) -> int:
        return sum(u.provenance.fallback is not None for u in self.nodes.values())

    def contrast(self, weights) -> tuple[float, float]:
        """Estimate and variance of ``weights @ theta``."""
        w = np.asarray(weights, dtype=float)
        return float(w @ self.theta), float(w @ self.cov @ w)


def hierarchical_estimate(
    dataset: Dataset,
    params: Sequence[ParameterDef],
    mode,
    monotone: bool = False,
) -> HierarchicalResult:
    """Corrected estimate of all parameters at the complete-case pattern.

    Parameters
    ----------
    dataset : Dataset
    params : sequence of ParameterDef
        Each must be estimable from complete rows.
    mode : KnownCovariance or PluginCovariance
    monotone : bool
        Restrict the lattice to the dropout chain in which components leave
        in column order. Each node then has at most one parent, so no child
        information is counted twice.

    Raises
    ------
    NoCompleteCasesError
        If no row is fully observed.
    """
    params = list(params)
    check_params(params, dataset.q)
    part = partition(dataset)
    root = MissingPattern.complete(dataset.q)
    if root not in part.groups:
        raise NoCompleteCasesError("no complete cases")
    child_fn = monotone_child if monotone else children

    reach, stack = {root}, [root]
    while stack:
        p = stack.pop()
        for c in child_fn(p):
            if c in part.groups and c not in reach:
                reach.add(c)
                stack.append(c)

    nodes: dict[MissingPattern, UpdatedEstimate] = {}
    skipped: dict[MissingPattern, str] = {}
    for p in sorted(reach, key=lambda p: (-p.level, p)):
        rows = dataset.values[part.groups[p]]
        try:
            est = subsample_estimate(rows, p, params, mode)
        except EstimationError as exc:
            if p == root:
                raise
            skipped[p] = str(exc)
            continue
        kids = [nodes[c] for c in child_fn(p) if c in nodes]
        node = correct_node(est, kids)
        node.provenance.skipped = {c: skipped[c] for c in child_fn(p) if c in skipped}
        nodes[p] = node
    return HierarchicalResult(nodes[root], nodes, part, params)
