"""Domain types, seed derivation and on-disk formats shared by all modules.

Grid data is a dense ``(N_rows, N_cols, V, T)`` float64 array. Stencil
positions are offsets of a *source* cell relative to the center cell, so the
position ``(dr, dc)`` of window ``(i, j)`` refers to cell ``(i + dr, j + dc)``.
Row index grows southward and column index grows eastward: ``(-1, 0)`` is N,
``(0, -1)`` is W.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .errors import FormatError, ValidationError

MAGIC = b"MCTL"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sII4Q")

# weight scales carried by a StencilGraph
CORRELATION = "correlation"
REGRESSION = "regression"
COEFFICIENT = "coefficient"
SCALES = (CORRELATION, REGRESSION, COEFFICIENT)


class StencilPosition(NamedTuple):
    dr: int
    dc: int

    @property
    def is_center(self) -> bool:
        return self.dr == 0 and self.dc == 0

    @property
    def name(self) -> str:
        return COMPASS[(self.dr, self.dc)]


POSITIONS = tuple(StencilPosition(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1))
CENTER = StencilPosition(0, 0)
COMPASS = {
    (-1, -1): "NW", (-1, 0): "N", (-1, 1): "NE",
    (0, -1): "W", (0, 0): "C", (0, 1): "E",
    (1, -1): "SW", (1, 0): "S", (1, 1): "SE",
}
POSITION_BY_NAME = {name: StencilPosition(*key) for key, name in COMPASS.items()}


def position_index(dr: int, dc: int) -> int:
    """Row-major index of a stencil position in ``POSITIONS``."""
    return (dr + 1) * 3 + (dc + 1)


def candidate_index(dr: int, dc: int, var: int, V: int) -> int:
    """Column of lag-1 candidate ``(dr, dc, var)`` in a LENS design matrix."""
    return position_index(dr, dc) * V + var


def candidate_of(column: int, V: int) -> tuple[int, int, int]:
    """Inverse of :func:`candidate_index`, returns ``(dr, dc, var)``."""
    pos, var = divmod(column, V)
    dr, dc = divmod(pos, 3)
    return dr - 1, dc - 1, var


@dataclass(frozen=True, eq=False)
class GridTensor:
    """Dense space-time field indexed ``[i, j, v, t]``."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, order="C", copy=True)
        if arr.ndim != 4:
            raise ValidationError(f"GridTensor needs 4 dims, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("GridTensor values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.values.shape

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def V(self) -> int:
        return self.values.shape[2]

    @property
    def T(self) -> int:
        return self.values.shape[3]

    def variable(self, v: int) -> "GridTensor":
        return GridTensor(self.values[:, :, v : v + 1, :])

    def __eq__(self, other):
        if not isinstance(other, GridTensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(
            self.values.view(np.uint64), other.values.view(np.uint64)
        )

    __hash__ = None


class Edge(NamedTuple):
    """Lag-1 link from ``src`` at stencil offset ``(dr, dc)`` to center ``dst``."""

    dr: int
    dc: int
    src: int
    dst: int
    w: float = 1.0
    p: float | None = None

    @property
    def key(self) -> tuple[int, int, int, int]:
        return (self.dr, self.dc, self.src, self.dst)

    @property
    def position(self) -> StencilPosition:
        return StencilPosition(self.dr, self.dc)


@dataclass(frozen=True)
class StencilGraph:
    """Directed weighted graph from the 9V lag-1 candidates to the V centers.

    Targets are always center variables, so an edge is fully described by its
    source offset, source variable and destination variable. ``scale`` tags
    what the weights mean (partial correlations, standardized regression
    coefficients or raw generating coefficients); only correlation-scale
    weights may be Fisher-aggregated.
    """

    V: int
    edges: tuple[Edge, ...] = ()
    scale: str = CORRELATION

    def __post_init__(self):
        if self.V < 1:
            raise ValidationError("StencilGraph needs V >= 1")
        if self.scale not in SCALES:
            raise ValidationError(f"unknown weight scale {self.scale!r}")
        seen = set()
        clean = []
        for e in self.edges:
            e = Edge(int(e[0]), int(e[1]), int(e[2]), int(e[3]), float(e[4]),
                     None if e[5] is None else float(e[5]))
            if e.dr not in (-1, 0, 1) or e.dc not in (-1, 0, 1):
                raise ValidationError(f"illegal stencil offset ({e.dr}, {e.dc})")
            if not (0 <= e.src < self.V and 0 <= e.dst < self.V):
                raise ValidationError(f"variable index out of range in {e}")
            if e.key in seen:
                raise ValidationError(f"duplicate edge {e.key}")
            if not math.isfinite(e.w):
                raise ValidationError(f"non-finite weight in {e}")
            if e.p is not None and not 0.0 <= e.p <= 1.0:
                raise ValidationError(f"p-value out of [0, 1] in {e}")
            seen.add(e.key)
            clean.append(e)
        clean.sort(key=lambda e: e.key)
        object.__setattr__(self, "edges", tuple(clean))

    def __len__(self):
        return len(self.edges)

    def edge_set(self) -> frozenset[tuple[int, int, int, int]]:
        return frozenset(e.key for e in self.edges)

    def weight(self, dr, dc, src, dst, default=0.0) -> float:
        for e in self.edges:
            if e.key == (dr, dc, src, dst):
                return e.w
        return default

    def filter(self, keep) -> "StencilGraph":
        return StencilGraph(self.V, tuple(e for e in self.edges if keep(e)), self.scale)

    def permute(self, perm: Iterable[int]) -> "StencilGraph":
        """Relabel variable ``k`` as ``perm[k]``."""
        perm = list(perm)
        return StencilGraph(
            self.V,
            tuple(e._replace(src=perm[e.src], dst=perm[e.dst]) for e in self.edges),
            self.scale,
        )


@dataclass(frozen=True)
class ReactionGraph:
    """Variable-level graph: stencil aggregated over positions."""

    V: int
    edges: dict = field(default_factory=dict)  # (u, v) -> weight, u != v
    self_weights: dict = field(default_factory=dict)  # v -> weight

    def edge_set(self) -> frozenset[tuple[int, int]]:
        """All directed pairs including autodependence ``(v, v)``."""
        return frozenset(self.edges) | frozenset((v, v) for v in self.self_weights)


@dataclass(frozen=True)
class SpatialGraph:
    """Position-level graph: stencil aggregated over variables."""

    edges: dict = field(default_factory=dict)  # StencilPosition -> weight, non-center
    center_weight: float | None = None

    def edge_set(self) -> frozenset[StencilPosition]:
        return frozenset(self.edges)


@dataclass(frozen=True)
class LinkAssumptions:
    """Background knowledge restricting which lag-1 links discovery may report.

    ``forbidden_sources`` bans every outgoing edge of a variable (for example a
    radiative flux that cannot drive chemistry). ``forbidden_edges`` bans the
    ``(source var, target var)`` pair at every stencil position.
    ``required_edges`` are kept whatever the tests say; entries are
    ``(dr, dc, src, dst)`` and a bare ``(src, dst)`` pair means the center
    position.
    """

    forbidden_sources: frozenset = frozenset()
    forbidden_edges: frozenset = frozenset()
    required_edges: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "forbidden_sources", frozenset(int(v) for v in self.forbidden_sources))
        object.__setattr__(self, "forbidden_edges", frozenset((int(a), int(b)) for a, b in self.forbidden_edges))
        req = set()
        for e in self.required_edges:
            e = tuple(int(x) for x in e)
            if len(e) == 2:
                e = (0, 0) + e
            if len(e) != 4 or e[0] not in (-1, 0, 1) or e[1] not in (-1, 0, 1):
                raise ValidationError(f"malformed required edge {e}")
            req.add(e)
        object.__setattr__(self, "required_edges", frozenset(req))
        clash = {e for e in self.required_edges if not self.allows(e[2], e[3])}
        if clash:
            raise ValidationError(f"edges both required and forbidden: {sorted(clash)}")

    def allows(self, src: int, dst: int) -> bool:
        return src not in self.forbidden_sources and (src, dst) not in self.forbidden_edges

    def requires(self, dr: int, dc: int, src: int, dst: int) -> bool:
        return (dr, dc, src, dst) in self.required_edges

    def check(self, V: int) -> None:
        bad = [v for v in self.forbidden_sources if not 0 <= v < V]
        bad += [e for e in self.forbidden_edges if not (0 <= e[0] < V and 0 <= e[1] < V)]
        bad += [e for e in self.required_edges if not (0 <= e[2] < V and 0 <= e[3] < V)]
        if bad:
            raise ValidationError(f"link assumptions reference variables outside 0..{V - 1}: {bad}")

    def permute(self, perm) -> "LinkAssumptions":
        perm = list(perm)
        return LinkAssumptions(
            frozenset(perm[v] for v in self.forbidden_sources),
            frozenset((perm[a], perm[b]) for a, b in self.forbidden_edges),
            frozenset((dr, dc, perm[a], perm[b]) for dr, dc, a, b in self.required_edges),
        )

    def to_dict(self) -> dict:
        return {
            "forbidden_sources": sorted(self.forbidden_sources),
            "forbidden_edges": sorted([list(e) for e in self.forbidden_edges]),
            "required_edges": sorted([list(e) for e in self.required_edges]),
        }

    @classmethod
    def from_dict(cls, d: dict | None) -> "LinkAssumptions":
        d = d or {}
        unknown = set(d) - {"forbidden_sources", "forbidden_edges", "required_edges"}
        if unknown:
            raise ValidationError(f"unknown link-assumption keys: {sorted(unknown)}")
        return cls(
            frozenset(d.get("forbidden_sources", ())),
            frozenset(tuple(e) for e in d.get("forbidden_edges", ())),
            frozenset(tuple(e) for e in d.get("required_edges", ())),
        )


def derive_seed(seed: int, index: int) -> int:
    """Stable 64-bit child seed for replicate ``index`` of a run seeded ``seed``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)


# --------------------------------------------------------------------------
# tensor files


def write_tensor(t: GridTensor, path) -> None:
    """Write ``t`` as ``MCTL`` v1: header then little-endian float64, t fastest."""
    path = Path(path)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, 4, *t.shape)
    payload = t.values.astype("<f8", copy=False).tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_tensor(path) -> GridTensor:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, ndim, *dims = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    if ndim != 4:
        raise FormatError(f"{path}: expected ndim=4, got {ndim}")
    count = math.prod(dims)
    expected = _HEADER.size + 8 * count
    if len(raw) != expected:
        raise FormatError(f"{path}: payload is {len(raw)} bytes, expected {expected}")
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=_HEADER.size)
    return GridTensor(values.reshape(dims))


# --------------------------------------------------------------------------
# graph JSON


def graph_to_dict(g: StencilGraph) -> dict:
    d = {
        "V": g.V,
        "edges": [
            {"src": {"dr": e.dr, "dc": e.dc, "var": e.src}, "dst": e.dst, "w": e.w, "p": e.p}
            for e in g.edges
        ],
    }
    # correlation is the default scale and is left implicit
    if g.scale != CORRELATION:
        d["scale"] = g.scale
    return d


def graph_to_json(g: StencilGraph) -> str:
    return json.dumps(graph_to_dict(g), sort_keys=True, separators=(",", ":"), allow_nan=False)


def graph_from_dict(d: dict) -> StencilGraph:
    try:
        edges = tuple(
            Edge(e["src"]["dr"], e["src"]["dc"], e["src"]["var"], e["dst"], e["w"], e.get("p"))
            for e in d["edges"]
        )
        return StencilGraph(int(d["V"]), edges, d.get("scale", CORRELATION))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed graph JSON: {exc}") from exc


def graph_from_json(text: str) -> StencilGraph:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"graph JSON does not parse: {exc}") from exc
    return graph_from_dict(d)


def write_graph(g: StencilGraph, path) -> None:
    Path(path).write_text(graph_to_json(g) + "\n")


def read_graph(path) -> StencilGraph:
    return graph_from_json(Path(path).read_text())


def write_meta(path, meta: dict) -> None:
    """Free-form provenance sidecar ``<path>.meta.json``."""
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
