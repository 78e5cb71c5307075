"""Sparse nearest-neighbor graphs carrying the frailty weight structure.

Locations are rows of an (m, d) coordinate array; indices are 0-based in
memory and 1-based only in files.  A graph holds, per location i, the
ordered neighbor list N(i) with positive weights summing to one, and the
reverse adjacency {(l, k) : N(l)[k] = i} needed by the frailty update.

Three variants cover the supported dependence layouts:

* ``undirected-self``   — self excluded from N(i); self-dependence enters
  through a separate diagonal parameter.
* ``undirected-in-set`` — self included as a member of N(i).
* ``directed-ordered``  — N(i) drawn from {0, .., i-1} only, so location 0
  has no neighbors and the weight matrix is strictly lower-triangular.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

VARIANTS = ("undirected-self", "undirected-in-set", "directed-ordered")
WEIGHT_SCHEMES = ("uniform", "inverse-distance", "custom")

_WEIGHT_SUM_TOL = 1e-8
_COINCIDENT_EPS = 1e-12


class GraphError(ValueError):
    """Invalid graph structure or construction arguments."""


@dataclass
class NeighborGraph:
    """Per-location neighbor lists, weights, and reverse adjacency.

    ``neighbors[i]`` is an ordered int array of location indices,
    ``weights[i]`` the matching positive weights summing to 1, and
    ``reverse[i]`` an (n_in, 2) int array of (l, k) pairs such that
    ``neighbors[l][k] == i``.  Graphs are immutable in spirit: build
    once, share freely.
    """

    neighbors: list
    weights: list
    variant: str
    h_s: int
    coords: np.ndarray | None = None
    reverse: list | None = field(default=None, repr=False)

    @property
    def m(self):
        return len(self.neighbors)

    def neighbor_count(self, i):
        return len(self.neighbors[i])

    def validate(self):
        if self.variant not in VARIANTS:
            raise GraphError(f"unknown variant {self.variant!r}")
        m = self.m
        if len(self.weights) != m:
            raise GraphError("neighbor and weight lists differ in length")
        for i in range(m):
            nbr = np.asarray(self.neighbors[i])
            w = np.asarray(self.weights[i])
            if nbr.size != w.size:
                raise GraphError(f"location {i}: neighbor/weight length mismatch")
            if nbr.size == 0:
                if self.variant != "directed-ordered" and m > 1:
                    raise GraphError(f"location {i} has no neighbors")
                continue
            if nbr.size > self.h_s:
                raise GraphError(f"location {i} exceeds the neighbor cap {self.h_s}")
            if np.any((nbr < 0) | (nbr >= m)):
                raise GraphError(f"location {i}: neighbor index out of range")
            if len(np.unique(nbr)) != nbr.size:
                raise GraphError(f"location {i}: duplicate neighbors")
            if np.any(w <= 0) or np.any(w > 1):
                raise GraphError(f"location {i}: weights must lie in (0, 1]")
            if abs(w.sum() - 1.0) > _WEIGHT_SUM_TOL:
                raise GraphError(f"location {i}: weights sum to {w.sum()!r}, not 1")
            if self.variant in ("undirected-self", "directed-ordered") and i in nbr:
                raise GraphError(f"location {i} may not neighbor itself in {self.variant}")
            if self.variant == "directed-ordered":
                if np.any(nbr >= i):
                    raise GraphError(f"location {i}: directed neighbors must precede it")
                if nbr.size != min(self.h_s, i):
                    raise GraphError(f"location {i}: directed neighbor count must be min(h_s, i)")
        return self


def _pairwise_sq_dists(a, b, block=512):
    """Squared Euclidean distances between row sets, blocked to bound memory."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.empty((a.shape[0], b.shape[0]))
    bsq = (b * b).sum(axis=1)
    for start in range(0, a.shape[0], block):
        stop = min(start + block, a.shape[0])
        chunk = a[start:stop]
        d = (chunk * chunk).sum(axis=1)[:, None] + bsq[None, :] - 2.0 * chunk @ b.T
        np.clip(d, 0.0, None, out=d)
        out[start:stop] = d
    return out


def _weights_for(dists, scheme):
    k = dists.size
    if scheme == "uniform":
        return np.full(k, 1.0 / k)
    if scheme == "inverse-distance":
        inv = 1.0 / np.maximum(np.sqrt(dists), _COINCIDENT_EPS)
        return inv / inv.sum()
    raise GraphError(f"unknown weight scheme {scheme!r}")


def _normalize_custom(weights, expected_len, i):
    w = np.asarray(weights, dtype=float)
    if w.size != expected_len:
        raise GraphError(f"location {i}: custom weights length {w.size} != {expected_len}")
    if np.any(w <= 0):
        raise GraphError(f"location {i}: custom weights must be positive")
    total = w.sum()
    if abs(total - 1.0) > _WEIGHT_SUM_TOL:
        raise GraphError(f"location {i}: custom weights sum to {total!r}")
    return w / total


def build_knn_graph(locations, h_s, weight_scheme="uniform", variant="undirected-self",
                    custom_weights=None):
    """Build the k-nearest-neighbor graph over Euclidean distance.

    Distance ties break toward the lower location index, which makes
    construction fully deterministic.  Neighbor counts cap at what the
    variant permits (m-1 others, m including self, or the i preceding
    locations for the directed variant).

    Parameters
    ----------
    locations : (m, d) array
        Coordinate rows; the row order is the location labeling.
    h_s : int
        Maximum neighbors per location.
    weight_scheme : {"uniform", "inverse-distance", "custom"}
    variant : {"undirected-self", "undirected-in-set", "directed-ordered"}
    custom_weights : list of arrays, required when ``weight_scheme="custom"``
    """
    coords = np.atleast_2d(np.asarray(locations, dtype=float))
    m = coords.shape[0]
    if m < 1:
        raise GraphError("need at least one location")
    h_s = int(h_s)
    if h_s < 1:
        raise GraphError("h_s must be at least 1")
    if variant not in VARIANTS:
        raise GraphError(f"unknown variant {variant!r}")
    if weight_scheme == "custom" and custom_weights is None:
        raise GraphError("custom weight scheme requires custom_weights")

    sq = _pairwise_sq_dists(coords, coords)
    order = np.lexsort((np.arange(m)[None, :].repeat(m, axis=0), sq), axis=1)

    neighbors, weights = [], []
    for i in range(m):
        cand = order[i]
        if variant == "undirected-self":
            cand = cand[cand != i]
            k = min(h_s, m - 1)
        elif variant == "undirected-in-set":
            k = min(h_s, m)
        else:  # directed-ordered
            cand = cand[cand < i]
            k = min(h_s, i)
        nbr = cand[:k].astype(np.int64)
        neighbors.append(nbr)
        if nbr.size == 0:
            weights.append(np.empty(0))
        elif weight_scheme == "custom":
            weights.append(_normalize_custom(custom_weights[i], nbr.size, i))
        else:
            weights.append(_weights_for(sq[i, nbr], weight_scheme))

    graph = NeighborGraph(neighbors, weights, variant, h_s, coords=coords)
    graph.validate()
    return build_reverse_adjacency(graph)


def build_reverse_adjacency(graph):
    """Populate ``graph.reverse`` with the transpose of the forward lists."""
    incoming = [[] for _ in range(graph.m)]
    for l in range(graph.m):
        for k, i in enumerate(graph.neighbors[l]):
            incoming[int(i)].append((l, k))
    graph.reverse = [
        np.array(pairs, dtype=np.int64).reshape(len(pairs), 2) for pairs in incoming
    ]
    return graph


def knn_for_new_location(coords, graph, h_s, weight_scheme="uniform", custom_weights=None):
    """Nearest training neighbors and normalized weights for an unseen point.

    Returns ``(indices, weights)`` with ``len(indices) = min(h_s, m)`` and
    weights positive, summing to one.
    """
    if graph.coords is None:
        raise GraphError("graph carries no coordinates; cannot place new locations")
    point = np.atleast_2d(np.asarray(coords, dtype=float))
    sq = _pairwise_sq_dists(point, graph.coords)[0]
    order = np.lexsort((np.arange(graph.m), sq))
    k = min(int(h_s), graph.m)
    nbr = order[:k].astype(np.int64)
    if weight_scheme == "custom":
        w = _normalize_custom(custom_weights, k, -1)
    else:
        w = _weights_for(sq[nbr], weight_scheme)
    return nbr, w


def incoming_weight_sums(graph):
    """Per-location sums of incoming weights: w_in[j] = sum over edges into j."""
    if graph.reverse is None:
        build_reverse_adjacency(graph)
    w_in = np.zeros(graph.m)
    for j in range(graph.m):
        for l, k in graph.reverse[j]:
            w_in[j] += graph.weights[l][k]
    return w_in


def graph_to_json(graph, path=None):
    """Serialize the graph (1-based indices on disk, like every artifact)."""
    payload = {
        "variant": graph.variant,
        "h_s": graph.h_s,
        "m": graph.m,
        "neighbors": [(np.asarray(n) + 1).tolist() for n in graph.neighbors],
        "weights": [np.asarray(w).tolist() for w in graph.weights],
    }
    text = json.dumps(payload, sort_keys=True, indent=1)
    if path is not None:
        with open(path, "w", newline="\n") as fh:
            fh.write(text + "\n")
    return text


def graph_from_json(source, coords=None):
    """Load a graph written by :func:`graph_to_json`."""
    if isinstance(source, str) and source.lstrip().startswith("{"):
        payload = json.loads(source)
    else:
        with open(source) as fh:
            payload = json.load(fh)
    neighbors = [np.asarray(n, dtype=np.int64) - 1 for n in payload["neighbors"]]
    weights = [np.asarray(w, dtype=float) for w in payload["weights"]]
    graph = NeighborGraph(
        neighbors,
        weights,
        payload["variant"],
        int(payload["h_s"]),
        coords=None if coords is None else np.asarray(coords, dtype=float),
    )
    graph.validate()
    return build_reverse_adjacency(graph)
