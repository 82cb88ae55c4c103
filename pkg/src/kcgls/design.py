"""Design matrix construction, linkage checking and constraint embedding.

The parameter vector is ordered artefacts, then participants, then
covariate coefficients, each block in roster order.  Each row of the
design matrix has a single 1 in the artefact block and a single 1 in the
participant block; covariate entries hold the record's covariate
deviations.  The canonical null vector is f = (-1 ... -1, 1 ... 1, 0 ... 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np

from .errors import UnknownParticipant
from .linalg import numeric_rank
from .model import ComparisonData, Constraint


@dataclass(frozen=True)
class LinkageResult:
    """Connected-component partition of the participant/artefact graph.

    Nodes are ("participant", id) or ("artefact", id); ``passed`` is true
    iff there is exactly one component containing every rostered node.
    """

    passed: bool
    components: tuple[frozenset, ...]


@dataclass(frozen=True)
class DesignMatrix:
    """The m-by-n design matrix with its index maps and null vector."""

    x: np.ndarray
    artefact_columns: dict[str, int]
    participant_columns: dict[str, int]
    covariate_columns: dict[str, int]
    f: np.ndarray
    rank_certificate: LinkageResult
    full_rank: bool

    @property
    def m(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def labels(self) -> tuple[tuple[str, str], ...]:
        """(kind, name) for each column, in column order."""
        out = [None] * self.n
        for name, col in self.artefact_columns.items():
            out[col] = ("artefact", name)
        for name, col in self.participant_columns.items():
            out[col] = ("participant", name)
        for name, col in self.covariate_columns.items():
            out[col] = ("covariate", name)
        return tuple(out)


def check_linkage(data: ComparisonData) -> LinkageResult:
    """Check that all artefacts and participants form one linked chain.

    Builds the bipartite graph with an edge for every (participant,
    artefact) pair that appears in a record.  The comparison is linked iff
    the graph has exactly one connected component covering the full
    roster; isolated rostered nodes count as their own components.
    """
    g = nx.Graph()
    for p in data.participants:
        g.add_node(("participant", p))
    for a in data.artefacts:
        g.add_node(("artefact", a))
    for rec in data.records:
        g.add_edge(("participant", rec.participant_id), ("artefact", rec.artefact_id))
    components = tuple(frozenset(c) for c in nx.connected_components(g))
    return LinkageResult(passed=len(components) == 1, components=components)


def build_design(data: ComparisonData) -> DesignMatrix:
    """Build the design matrix X, the null vector f and the rank certificate.

    The artefact and participant entries are exact unit values, so X f = 0
    holds in exact arithmetic.  With covariates present, graph linkage
    alone cannot detect collinear covariate columns, so a numeric rank
    check of the full X supplements it.
    """
    j = data.n_artefacts
    ell = data.n_participants
    k = data.n_covariates
    n = j + ell + k

    artefact_columns = {a: i for i, a in enumerate(data.artefacts)}
    participant_columns = {p: j + i for i, p in enumerate(data.participants)}
    covariate_columns = {c: j + ell + i for i, c in enumerate(data.covariate_names)}

    x = np.zeros((data.m, n))
    for row, rec in enumerate(data.records):
        x[row, artefact_columns[rec.artefact_id]] = 1.0
        x[row, participant_columns[rec.participant_id]] = 1.0
        for name, col in covariate_columns.items():
            x[row, col] = rec.covariates.get(name, 0.0)

    f = np.concatenate([-np.ones(j), np.ones(ell), np.zeros(k)])

    linkage = check_linkage(data)
    full_rank = linkage.passed
    if full_rank and k > 0:
        full_rank = numeric_rank(x) == n - 1
    return DesignMatrix(
        x=x,
        artefact_columns=artefact_columns,
        participant_columns=participant_columns,
        covariate_columns=covariate_columns,
        f=f,
        rank_certificate=linkage,
        full_rank=full_rank,
    )


def embed_constraint(cons: Constraint, dm: DesignMatrix) -> np.ndarray:
    """Expand participant weights to the full parameter space.

    Returns the n-vector with zeros on artefact and covariate entries and
    the participant weights in the participant block, so w'f equals the
    weight sum (1 for a valid constraint).
    """
    w = np.zeros(dm.n)
    for pid, weight in cons.weights.items():
        if pid not in dm.participant_columns:
            raise UnknownParticipant(f"constraint references unknown participant {pid!r}")
        w[dm.participant_columns[pid]] = weight
    return w
