"""Fusion-center bookkeeping: assemble what the network actually delivered.

After censoring, the fusion center holds two node groups: senders, whose
real measurement values arrived, and hard-decision nodes, which claimed
their weight pattern touches no active source.  On the wire the hard
decision is the single symbol -1; the fusion center stores it as the
cleaned value 0, i.e. as a claimed zero-response row.  Silent nodes
contribute nothing and are only counted.

``stack_operator`` builds the weighting operator used by the modified
recovery program: the identity stacked over the (weighted) hard-decision
rows.  Its smallest singular value is at least 1 because its Gram matrix
is the identity plus a positive semidefinite term.

Two data-fit radii are provided.  ``epsilon_policy`` is the unconditional
r.m.s. noise over a given row count.  ``calibrated_epsilon`` additionally
accounts for the magnitude screening (kept rows are selected for being
loud) and for the leakage hiding behind erroneous claimed zeros; it is the
radius the censored reconstructions should use.

``to_text`` / ``from_text`` give a deterministic columnar text round trip
for replay and debugging; positions there are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from scipy import special

from .censor import (
    Decision,
    DecisionKind,
    Thresholds,
    overlap_pmf,
    overlap_priors,
    q_func,
)
from .model import ModelParams, SensingVector

__all__ = [
    "FusionBatch",
    "StackedOperator",
    "collect",
    "stack_operator",
    "epsilon_policy",
    "calibrated_epsilon",
    "to_text",
    "from_text",
]


@dataclass(frozen=True, eq=False)
class FusionBatch:
    """Everything the fusion center received from one network snapshot."""

    n: int                    # scene dimension
    num_nodes: int            # network size, including silent nodes
    send_nodes: np.ndarray    # ascending node ids (0-based) that sent values
    hard_nodes: np.ndarray    # ascending node ids that sent the hard decision
    sent_values: np.ndarray   # measurements aligned with send_nodes
    sent_rows: np.ndarray     # dense weight rows of the senders, (num_send, n)
    hard_rows: np.ndarray     # dense weight rows of the hard deciders

    def __post_init__(self) -> None:
        send_nodes = np.asarray(self.send_nodes, dtype=np.int64)
        hard_nodes = np.asarray(self.hard_nodes, dtype=np.int64)
        sent_values = np.asarray(self.sent_values, dtype=np.float64)
        sent_rows = np.asarray(self.sent_rows, dtype=np.float64).reshape(send_nodes.size, self.n)
        hard_rows = np.asarray(self.hard_rows, dtype=np.float64).reshape(hard_nodes.size, self.n)
        ids = np.concatenate([send_nodes, hard_nodes])
        if ids.size and (ids.min() < 0 or ids.max() >= self.num_nodes):
            raise ValueError("node ids out of range")
        if np.unique(ids).size != ids.size:
            raise ValueError("a node cannot appear in both groups")
        for nodes in (send_nodes, hard_nodes):
            if np.any(np.diff(nodes) <= 0):
                raise ValueError("node ids must be ascending")
        if sent_values.size != send_nodes.size:
            raise ValueError("sent values misaligned with sender ids")
        if not np.all(np.isfinite(sent_values)):
            raise ValueError("sent values must be finite")
        object.__setattr__(self, "send_nodes", send_nodes)
        object.__setattr__(self, "hard_nodes", hard_nodes)
        object.__setattr__(self, "sent_values", sent_values)
        object.__setattr__(self, "sent_rows", sent_rows)
        object.__setattr__(self, "hard_rows", hard_rows)

    @property
    def num_send(self) -> int:
        return int(self.send_nodes.size)

    @property
    def num_hard(self) -> int:
        return int(self.hard_nodes.size)

    @property
    def num_silent(self) -> int:
        return self.num_nodes - self.num_send - self.num_hard

    @property
    def num_active(self) -> int:
        """Nodes that transmitted anything at all."""
        return self.num_send + self.num_hard

    def __eq__(self, other: object) -> bool:
        # array fields make the generated dataclass __eq__ ambiguous
        if not isinstance(other, FusionBatch):
            return NotImplemented
        return (
            self.n == other.n
            and self.num_nodes == other.num_nodes
            and np.array_equal(self.send_nodes, other.send_nodes)
            and np.array_equal(self.hard_nodes, other.hard_nodes)
            and np.array_equal(self.sent_values, other.sent_values)
            and np.array_equal(self.sent_rows, other.sent_rows)
            and np.array_equal(self.hard_rows, other.hard_rows)
        )

    __hash__ = None


@dataclass(frozen=True)
class StackedOperator:
    """Identity over weighted hard-decision rows; smallest singular value >= 1."""

    matrix: np.ndarray  # (n + num_hard, n)
    weight: float       # multiplier applied to the hard-decision rows

    @property
    def n(self) -> int:
        return int(self.matrix.shape[1])


def collect(
    decisions: Sequence[Decision],
    vectors: Sequence[SensingVector],
) -> FusionBatch:
    """Sort one snapshot of per-node decisions into a fusion batch.

    ``decisions[i]`` and ``vectors[i]`` belong to node ``i``; the two
    sequences must align.  Silent nodes are dropped (only counted), and
    hard decisions arrive as claimed zero responses with their weight rows.
    """
    if len(decisions) != len(vectors):
        raise ValueError("decisions and vectors must align, one per node")
    if not vectors:
        raise ValueError("empty network")
    n = vectors[0].n
    send_ids, hard_ids, values = [], [], []
    for i, (dec, vec) in enumerate(zip(decisions, vectors)):
        if vec.n != n:
            raise ValueError("sensing vectors disagree on the scene dimension")
        if dec.kind is DecisionKind.SEND_VALUE:
            send_ids.append(i)
            values.append(dec.value)
        elif dec.kind is DecisionKind.HARD_ZERO:
            hard_ids.append(i)
    sent_rows = np.array([vectors[i].to_dense() for i in send_ids]).reshape(len(send_ids), n)
    hard_rows = np.array([vectors[i].to_dense() for i in hard_ids]).reshape(len(hard_ids), n)
    return FusionBatch(
        n=n,
        num_nodes=len(decisions),
        send_nodes=np.array(send_ids, dtype=np.int64),
        hard_nodes=np.array(hard_ids, dtype=np.int64),
        sent_values=np.array(values, dtype=np.float64),
        sent_rows=sent_rows,
        hard_rows=hard_rows,
    )


def stack_operator(batch: FusionBatch, weight: float = 1.0) -> StackedOperator:
    """Identity stacked over ``weight`` times the hard-decision rows."""
    if not (np.isfinite(weight) and weight >= 0.0):
        raise ValueError("weight must be finite and nonnegative")
    matrix = np.vstack([np.eye(batch.n), weight * batch.hard_rows])
    return StackedOperator(matrix=matrix, weight=float(weight))


def epsilon_policy(num_send: int, params: ModelParams) -> float:
    """Data-fit radius matching the r.m.s. noise on the sent values.

    Each sent value carries noise of variance ``k_c sigma_v^2``; over
    ``num_send`` independent rows the noise vector has r.m.s. norm
    ``sigma_v * sqrt(k_c * num_send)``.
    """
    if num_send < 0:
        raise ValueError("num_send must be nonnegative")
    return float(params.sigma_v * np.sqrt(params.k_c * num_send))


def _inside_mass(variance: float, cut: float) -> float:
    """P(|z| < cut) for z ~ N(0, variance); the point mass at 0 counts."""
    if cut <= 0.0:
        return 0.0
    if variance <= 0.0:
        return 1.0
    return float(1.0 - 2.0 * q_func(cut / np.sqrt(variance)))


def _inside_second_moment(variance: float, cut: float) -> float:
    """E[z^2 | |z| < cut] for z ~ N(0, variance)."""
    if cut <= 0.0 or variance <= 0.0:
        return 0.0
    c = cut / np.sqrt(variance)
    inner = 1.0 - 2.0 * float(q_func(c))
    if inner <= 0.0:
        return 0.0
    phi = np.exp(-0.5 * c * c) / np.sqrt(2.0 * np.pi)
    return float(variance * (1.0 - 2.0 * c * phi / inner))


def calibrated_epsilon(
    batch: FusionBatch,
    thresholds: Thresholds,
    params: ModelParams,
    include_hard_rows: bool = True,
) -> float:
    """Selection-aware data-fit radius for censored reconstructions.

    ``epsilon_policy`` budgets the unconditional r.m.s. noise, which is the
    right radius only when every row is kept.  Censoring keeps a value row
    exactly when its magnitude clears the send threshold, so the retained
    noise is biased loud (a no-overlap row survives only on a large noise
    excursion) and the unconditional budget tends to leave the true scene
    outside the fit ball.  This instead sums, over the rows the ball will
    cover, the expected squared mismatch given what the fusion center holds:

    * per sent value, the posterior mean of the squared sensing noise given
      that value, under the empty/occupied overlap mixture;
    * per hard-decision row (when ``include_hard_rows``), the expected
      squared signal leakage of a row whose measurement landed inside the
      hard region, i.e. the energy an erroneous claimed zero hides.

    Everything follows from the design parameters and the received payloads;
    no ground truth enters.  Pass ``include_hard_rows=False`` when the
    reconstruction constrains only the sent values.
    """
    var_empty = params.k_c * params.sigma_v**2
    overlaps = np.arange(1, params.k + 1, dtype=np.float64)
    var_occupied = overlaps * params.sigma_s**2 + var_empty
    p_empty, p_occupied = overlap_priors(params)
    pmf = overlap_pmf(params)

    total = 0.0
    # noise carried by the sent values, one posterior per received value
    if batch.num_send and var_empty > 0.0:
        z_sq = batch.sent_values**2
        variances = np.concatenate(([var_empty], var_occupied))
        priors = np.concatenate(([p_empty], p_occupied * pmf))
        with np.errstate(divide="ignore"):
            logw = (
                np.log(priors)
                - z_sq[:, None] / (2.0 * variances)
                - 0.5 * np.log(variances)
            )
        logw -= special.logsumexp(logw, axis=1, keepdims=True)
        # noise given the row's value: shrink by the noise share of the
        # component variance, plus the unexplained remainder
        share = var_empty / variances
        conditional = share**2 * z_sq[:, None] + var_empty * (1.0 - share)
        total += float((np.exp(logw) * conditional).sum())

    # signal energy hiding behind claimed zeros
    if include_hard_rows and batch.num_hard:
        cut = thresholds.lower
        mass_empty = _inside_mass(var_empty, cut)
        mass_occ = np.array([_inside_mass(v, cut) for v in var_occupied])
        var_signal = var_occupied - var_empty
        leak = np.zeros_like(var_occupied)
        positive = var_occupied > 0.0
        if positive.any():
            share = var_signal[positive] / var_occupied[positive]
            m2 = np.array(
                [_inside_second_moment(v, cut) for v in var_occupied[positive]]
            )
            leak[positive] = share**2 * m2 + var_signal[positive] * (1.0 - share)
        denom = p_empty * mass_empty + p_occupied * float((pmf * mass_occ).sum())
        if denom > 0.0:
            per_row = p_occupied * float((pmf * mass_occ * leak).sum()) / denom
            total += batch.num_hard * per_row

    return float(np.sqrt(total))


def _row_fields(row: np.ndarray) -> tuple[str, str]:
    support = np.flatnonzero(row)
    signs = ",".join("+" if row[j] > 0 else "-" for j in support)
    return ",".join(str(j + 1) for j in support), signs


def to_text(batch: FusionBatch) -> str:
    """Deterministic columnar dump of a batch; 1-based positions.

    One line per received transmission: node id, kind, payload (the wire
    symbol -1 for hard decisions), weight support, weight signs.
    """
    lines = [
        "# censorcs batch v1",
        f"n={batch.n} num_nodes={batch.num_nodes}",
        "node kind value support signs",
    ]
    send_pos = {int(node): i for i, node in enumerate(batch.send_nodes)}
    hard_pos = {int(node): i for i, node in enumerate(batch.hard_nodes)}
    for node in sorted(send_pos | hard_pos):
        if node in send_pos:
            i = send_pos[node]
            support, signs = _row_fields(batch.sent_rows[i])
            value = repr(float(batch.sent_values[i]))
            kind = "send"
        else:
            support, signs = _row_fields(batch.hard_rows[hard_pos[node]])
            value = "-1"
            kind = "hard"
        lines.append(f"{node + 1} {kind} {value} {support} {signs}")
    return "\n".join(lines) + "\n"


def from_text(text: str) -> FusionBatch:
    """Rebuild a batch from :func:`to_text` output (exact round trip)."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if len(lines) < 2 or not lines[0].startswith("n="):
        raise ValueError("not a batch dump")
    head = dict(item.split("=") for item in lines[0].split())
    n, num_nodes = int(head["n"]), int(head["num_nodes"])
    send_ids, hard_ids, values, send_rows, hard_rows = [], [], [], [], []
    for line in lines[2:]:
        node_s, kind, value_s, support_s, signs_s = line.split()
        row = np.zeros(n)
        support = [int(t) - 1 for t in support_s.split(",")]
        row[support] = [1.0 if t == "+" else -1.0 for t in signs_s.split(",")]
        if kind == "send":
            send_ids.append(int(node_s) - 1)
            values.append(float(value_s))
            send_rows.append(row)
        elif kind == "hard":
            hard_ids.append(int(node_s) - 1)
            hard_rows.append(row)
        else:
            raise ValueError(f"unknown transmission kind {kind!r}")
    return FusionBatch(
        n=n,
        num_nodes=num_nodes,
        send_nodes=np.array(send_ids, dtype=np.int64),
        hard_nodes=np.array(hard_ids, dtype=np.int64),
        sent_values=np.array(values, dtype=np.float64),
        sent_rows=np.array(send_rows).reshape(len(send_ids), n),
        hard_rows=np.array(hard_rows).reshape(len(hard_ids), n),
    )
