"""Serving-set selection for the four cooperation schemes.

Every scheme assigns each UE an ordered set of serving BSs (descending
RSRP) and a master BS (highest RSRP, ties broken by lowest BS index). The
user-centric scheme additionally merges UEs sharing a master into solve
units for the distributed precoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .scenario import Topology, _grid_dims


class Scheme(str, Enum):
    SINGLE_NODE = "single"
    STATIC_COOP = "static"
    CENTRALIZED = "central"
    DISTRIBUTED = "distributed"


@dataclass(frozen=True)
class SolveUnit:
    """One distributed solve unit: UEs sharing a master BS plus their serving BSs."""

    master: int
    bs_set: tuple      # sorted union of member serving sets
    ue_set: tuple      # sorted member UEs


@dataclass(frozen=True)
class ClusterAssignment:
    scheme: Scheme
    serving: list      # per-UE list of BS indices, descending RSRP
    master: list       # per-UE master BS
    clusters: list = field(default_factory=list)  # SolveUnits (distributed scheme only)


def _rank_bs(rsrp_col: np.ndarray) -> np.ndarray:
    """BS indices sorted by descending RSRP, ties by lowest index."""
    n = rsrp_col.shape[0]
    return np.lexsort((np.arange(n), -rsrp_col))


def assign_single_node(rsrp_table: np.ndarray) -> ClusterAssignment:
    """Each UE served by its best-RSRP BS only."""
    rsrp_table = np.asarray(rsrp_table, dtype=float)
    best = rsrp_table.argmax(axis=0)  # argmax takes the first (lowest) index on ties
    serving = [[int(b)] for b in best]
    return ClusterAssignment(Scheme.SINGLE_NODE, serving, [int(b) for b in best])


def assign_static_clusters(topo: Topology, group_count: int,
                           rsrp_table: np.ndarray) -> ClusterAssignment:
    """Partition the BS grid into contiguous blocks; UE joins its best BS's block."""
    rsrp_table = np.asarray(rsrp_table, dtype=float)
    n_bs = rsrp_table.shape[0]
    if n_bs % group_count:
        raise ValueError("group_count does not divide n_bs")
    rows, cols = topo.grid_shape
    block_of = _block_ids(rows, cols, group_count)
    best = rsrp_table.argmax(axis=0)
    members = [np.flatnonzero(block_of == b) for b in range(group_count)]
    serving, master = [], []
    for k, bs in enumerate(best):
        blk = members[block_of[bs]]
        order = _rank_bs(rsrp_table[blk, k])
        serving.append([int(blk[i]) for i in order])
        master.append(int(blk[order[0]]))
    return ClusterAssignment(Scheme.STATIC_COOP, serving, master)


def _block_ids(rows: int, cols: int, group_count: int) -> np.ndarray:
    """Contiguous grid-block id per BS; block shape as square as the grid allows."""
    best = None
    for gr in range(1, group_count + 1):
        if group_count % gr:
            continue
        gc = group_count // gr
        if rows % gr or cols % gc:
            continue
        score = abs(rows / gr - cols / gc)
        if best is None or score < best[0]:
            best = (score, gr, gc)
    if best is None:
        raise ValueError("group_count incompatible with the BS grid shape")
    _, gr, gc = best
    br, bc = rows // gr, cols // gc
    ids = np.empty(rows * cols, dtype=int)
    for i in range(rows):
        for j in range(cols):
            ids[i * cols + j] = (i // br) * gc + (j // bc)
    return ids


def assign_user_centric(rsrp_table: np.ndarray, l: int) -> ClusterAssignment:
    """Top-l BSs by RSRP per UE; UEs sharing a master merge into one solve unit."""
    rsrp_table = np.asarray(rsrp_table, dtype=float)
    n_bs = rsrp_table.shape[0]
    if not (1 <= l <= n_bs):
        raise ValueError("cluster size l must satisfy 1 <= l <= n_bs")
    serving, master = [], []
    for k in range(rsrp_table.shape[1]):
        order = _rank_bs(rsrp_table[:, k])[:l]
        serving.append([int(b) for b in order])
        master.append(int(order[0]))
    units = []
    for m in sorted(set(master)):
        ues = tuple(k for k, mk in enumerate(master) if mk == m)
        bss = sorted(set(b for k in ues for b in serving[k]))
        units.append(SolveUnit(master=m, bs_set=tuple(bss), ue_set=ues))
    return ClusterAssignment(Scheme.DISTRIBUTED, serving, master, units)


def assign_centralized(rsrp_table: np.ndarray) -> ClusterAssignment:
    """All BSs serve every UE (coherent joint transmission across the network)."""
    rsrp_table = np.asarray(rsrp_table, dtype=float)
    serving, master = [], []
    for k in range(rsrp_table.shape[1]):
        order = _rank_bs(rsrp_table[:, k])
        serving.append([int(b) for b in order])
        master.append(int(order[0]))
    return ClusterAssignment(Scheme.CENTRALIZED, serving, master)


def build_assignment(scheme: Scheme, rsrp_table: np.ndarray, topo: Topology,
                     cluster_size_l: int, group_count: int) -> ClusterAssignment:
    """Scheme dispatch used by the experiment harness."""
    if scheme == Scheme.SINGLE_NODE:
        return assign_single_node(rsrp_table)
    if scheme == Scheme.STATIC_COOP:
        return assign_static_clusters(topo, group_count, rsrp_table)
    if scheme == Scheme.CENTRALIZED:
        return assign_centralized(rsrp_table)
    if scheme == Scheme.DISTRIBUTED:
        return assign_user_centric(rsrp_table, cluster_size_l)
    raise ValueError(f"unknown scheme {scheme!r}")
