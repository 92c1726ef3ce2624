"""Stencil decomposition, advection-angle estimation and graph metrics."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, asdict
from typing import Iterable

import numpy as np

from .core import (
    CORRELATION,
    ReactionGraph,
    SpatialGraph,
    StencilGraph,
    StencilPosition,
)
from .errors import DomainError, FormatError, ZeroResultant

METRICS_SCHEMA = "mcastle-metrics/1"
METRICS_FIELDS = (
    "experiment_id", "tp", "fp", "fn", "precision", "recall", "f1",
    "theta_true", "theta_hat", "delta_theta",
)


def fisher_aggregate(weights: Iterable[float]) -> float:
    """Average correlations in Fisher-z space: ``tanh(mean(atanh(w)))``."""
    w = np.asarray(list(weights), dtype=np.float64)
    if w.size == 0:
        raise DomainError("cannot aggregate an empty list of weights")
    if np.any(~np.isfinite(w)) or np.any(np.abs(w) >= 1.0):
        raise DomainError("Fisher aggregation needs correlations strictly inside (-1, 1)")
    return float(np.tanh(np.mean(np.arctanh(w))))


def _require_correlation(g: StencilGraph):
    if g.scale != CORRELATION:
        raise DomainError(f"decomposition needs correlation-scale weights, graph is {g.scale!r}")


def decompose_reaction(g: StencilGraph) -> ReactionGraph:
    """Collapse stencil positions, keeping the (source var, target var) pairs."""
    _require_correlation(g)
    groups = defaultdict(list)
    for e in g.edges:
        groups[(e.src, e.dst)].append(e.w)
    edges, selfw = {}, {}
    for (u, v), ws in sorted(groups.items()):
        agg = fisher_aggregate(ws)
        if u == v:
            selfw[v] = agg
        else:
            edges[(u, v)] = agg
    return ReactionGraph(g.V, edges, selfw)


def decompose_spatial(g: StencilGraph) -> SpatialGraph:
    """Collapse variables, keeping the source position; center links fold into
    the center autodependence weight."""
    _require_correlation(g)
    groups = defaultdict(list)
    for e in g.edges:
        groups[e.position].append(e.w)
    center = groups.pop(StencilPosition(0, 0), None)
    edges = {pos: fisher_aggregate(ws) for pos, ws in sorted(groups.items())}
    return SpatialGraph(edges, None if center is None else fisher_aggregate(center))


def transport_angle(dr: int, dc: int) -> float:
    """Direction (degrees, counter-clockwise from east) of travel from the
    source position toward the center. W maps to 0, S to 90, E to 180."""
    if dr == 0 and dc == 0:
        raise ValueError("the center position has no direction")
    return math.degrees(math.atan2(dr, -dc)) % 360.0


@dataclass(frozen=True)
class AngleEstimate:
    theta_hat: float
    total_weight: float


def derive_angle(g: StencilGraph) -> AngleEstimate:
    """Weighted circular mean of the non-center edge directions.

    Weights are ``|w|``: a strong negative dependence is still evidence of
    transport from that side.
    """
    sx = sy = total = 0.0
    for e in g.edges:
        if e.dr == 0 and e.dc == 0:
            continue
        strength = abs(e.w)
        ang = math.radians(transport_angle(e.dr, e.dc))
        sx += strength * math.cos(ang)
        sy += strength * math.sin(ang)
        total += strength
    if math.hypot(sx, sy) < 1e-12:
        raise ZeroResultant("stencil has no net direction (isotropic or no spatial edges)")
    return AngleEstimate(math.degrees(math.atan2(sy, sx)) % 360.0, total)


def angle_error(theta1: float, theta2: float) -> float:
    """Smallest absolute difference between two angles, in [0, 180]."""
    d = abs(theta1 % 360.0 - theta2 % 360.0)
    return min(d, 360.0 - d)


@dataclass(frozen=True)
class GraphMetrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


def metrics_from_counts(tp: int, fp: int, fn: int) -> GraphMetrics:
    """Precision/recall/F1 with the empty-set conventions.

    An empty prediction is vacuously precise and an empty truth is vacuously
    recalled, so two empty graphs score F1 = 1.
    """
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    if precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return GraphMetrics(tp, fp, fn, precision, recall, f1)


def graph_f1(predicted, truth) -> GraphMetrics:
    """Directed-edge confusion counts between two edge collections.

    Accepts StencilGraph, ReactionGraph or any iterable of hashable edges.
    """
    p, t = _edges(predicted), _edges(truth)
    return metrics_from_counts(len(p & t), len(p - t), len(t - p))


def _edges(g) -> frozenset:
    if hasattr(g, "edge_set"):
        return g.edge_set()
    return frozenset(g)


def metrics_row(experiment_id, m: GraphMetrics, theta_true=None, theta_hat=None,
                delta_theta=None) -> dict:
    row = {"experiment_id": experiment_id}
    row.update(asdict(m))
    row.update(theta_true=theta_true, theta_hat=theta_hat, delta_theta=delta_theta)
    return row


def write_metrics_header(fh) -> None:
    fh.write(f"# schema: {METRICS_SCHEMA}\n")
    csv.writer(fh, lineterminator="\n").writerow(METRICS_FIELDS)


def write_metrics_row(fh, row: dict) -> None:
    def fmt(x):
        if x is None:
            return ""
        if isinstance(x, float):
            return repr(x)
        return str(x)

    csv.writer(fh, lineterminator="\n").writerow([fmt(row.get(k)) for k in METRICS_FIELDS])


def read_metrics(text: str) -> list[dict]:
    """Parse a metrics CSV, refusing files written under another schema."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"# schema: {METRICS_SCHEMA}":
        raise FormatError(f"metrics CSV is not schema {METRICS_SCHEMA}")
    reader = csv.DictReader(io.StringIO("\n".join(lines[1:])))
    if tuple(reader.fieldnames or ()) != METRICS_FIELDS:
        raise FormatError(f"metrics CSV header mismatch: {reader.fieldnames}")
    rows = []
    for r in reader:
        out = {"experiment_id": r["experiment_id"]}
        for k in ("tp", "fp", "fn"):
            out[k] = int(r[k])
        for k in ("precision", "recall", "f1", "theta_true", "theta_hat", "delta_theta"):
            out[k] = float(r[k]) if r[k] != "" else None
        rows.append(out)
    return rows
