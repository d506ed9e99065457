"""Bounding-volume binary tree over spheres.

Supports incremental insertion and "largest empty radius at a point"
queries in expected O(log n).  Every sphere lives in exactly one leaf;
each node's box encloses the full extent (center +/- radius per axis) of
all spheres below it, so sibling boxes may overlap.  Query results are
bit-identical to a brute-force scan over the sphere store.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from . import _kernels as K
from .geometry import BoxDomain, Sphere

__all__ = ["BvhNode", "SphereTree"]

DEFAULT_LEAF_CAPACITY = 128


@dataclass(frozen=True)
class BvhNode:
    """Read-only view of one tree node, for inspection and tests."""

    index: int
    bbox_lo: np.ndarray
    bbox_hi: np.ndarray
    sphere_ids: np.ndarray  # empty for internal nodes
    left: Optional[int]
    right: Optional[int]

    @property
    def is_leaf(self) -> bool:
        return self.left is None


class SphereTree:
    """Append-only sphere store plus the bounding-volume index over it."""

    def __init__(self, box: BoxDomain, leaf_capacity: int = DEFAULT_LEAF_CAPACITY,
                 capacity: int = 1024):
        if leaf_capacity < 2:
            raise ValueError(f"leaf_capacity must be >= 2, got {leaf_capacity}")
        self.box = box
        self.leaf_capacity = int(leaf_capacity)
        self.meta = np.zeros(8, dtype=np.int64)
        self._alloc_spheres(max(int(capacity), 16))

    # -- storage management -------------------------------------------------

    def _alloc_spheres(self, cap: int) -> None:
        d = self.box.dimension
        self.centers = np.empty((cap, d), dtype=np.float64)
        self.radii = np.empty(cap, dtype=np.float64)
        rows = cap // max(1, self.leaf_capacity // 2) + 8
        nodes = 2 * rows + 8
        self.node_lo = np.empty((nodes, d), dtype=np.float64)
        self.node_hi = np.empty((nodes, d), dtype=np.float64)
        self.node_left = np.empty(nodes, dtype=np.int64)
        self.node_right = np.empty(nodes, dtype=np.int64)
        self.node_row = np.empty(nodes, dtype=np.int64)
        self.leaf_buf = np.empty((rows, self.leaf_capacity + 1), dtype=np.int64)
        self.leaf_cnt = np.zeros(rows, dtype=np.int64)
        self.free_rows = np.empty(rows, dtype=np.int64)
        self._scratch_node = np.empty(nodes, dtype=np.int64)
        self._scratch_lb = np.empty(nodes, dtype=np.float64)

    def _grow(self, need: int) -> None:
        old_centers, old_radii = self.centers, self.radii
        old = (self.node_lo, self.node_hi, self.node_left, self.node_right,
               self.node_row, self.leaf_buf, self.leaf_cnt, self.free_rows)
        cap = max(2 * old_radii.size, need)
        self._alloc_spheres(cap)
        n = int(self.meta[K.NSPH])
        self.centers[:n] = old_centers[:n]
        self.radii[:n] = old_radii[:n]
        nn = int(self.meta[K.NNODES])
        nr = int(self.meta[K.NROWS])
        self.node_lo[:nn] = old[0][:nn]
        self.node_hi[:nn] = old[1][:nn]
        self.node_left[:nn] = old[2][:nn]
        self.node_right[:nn] = old[3][:nn]
        self.node_row[:nn] = old[4][:nn]
        self.leaf_buf[:nr] = old[5][:nr]
        self.leaf_cnt[:nr] = old[6][:nr]
        ft = int(self.meta[K.FREETOP])
        self.free_rows[:ft] = old[7][:ft]

    def _ensure_room(self, extra_spheres: int = 1) -> None:
        # node/row arrays are sized from the sphere capacity with a bound
        # that covers any insertion order, so only sphere room is checked
        need_sph = int(self.meta[K.NSPH]) + extra_spheres
        if need_sph > self.radii.size:
            self._grow(need_sph)

    # -- public API ----------------------------------------------------------

    def __len__(self) -> int:
        return int(self.meta[K.NSPH])

    @property
    def sphere_centers(self) -> np.ndarray:
        return self.centers[: len(self)]

    @property
    def sphere_radii(self) -> np.ndarray:
        return self.radii[: len(self)]

    def insert(self, sphere: Sphere) -> int:
        """Insert a sphere; returns its id.  The ball must fit in the box."""
        if sphere.dimension != self.box.dimension:
            raise ValueError("sphere dimension does not match the box")
        tol = 1e-9 * self.box.side
        lo = sphere.center - sphere.radius
        hi = sphere.center + sphere.radius
        if np.any(lo < -tol) or np.any(hi > self.box.side + tol):
            raise ValueError(f"sphere {sphere} does not fit inside the box domain")
        self._ensure_room(1)
        sid = int(self.meta[K.NSPH])
        self.centers[sid] = sphere.center
        self.radii[sid] = sphere.radius
        self.meta[K.NSPH] = sid + 1
        K.tree_insert(sid, self.meta, self.node_lo, self.node_hi, self.node_left,
                      self.node_right, self.node_row, self.leaf_buf, self.leaf_cnt,
                      self.free_rows, self.centers, self.radii)
        return sid

    def extend(self, centers: np.ndarray, radii: np.ndarray) -> None:
        """Bulk-insert spheres in order (used when reloading a packing)."""
        centers = np.ascontiguousarray(centers, dtype=np.float64)
        radii = np.ascontiguousarray(radii, dtype=np.float64)
        if centers.ndim != 2 or centers.shape[1] != self.box.dimension:
            raise ValueError("centers must be (n, d) with the box dimension")
        if radii.shape != (centers.shape[0],):
            raise ValueError("radii must be 1-d and match centers")
        m = centers.shape[0]
        self._ensure_room(m)
        n0 = len(self)
        self.centers[n0 : n0 + m] = centers
        self.radii[n0 : n0 + m] = radii
        K.bulk_insert(n0 + m, self.meta, self.node_lo, self.node_hi,
                      self.node_left, self.node_right, self.node_row,
                      self.leaf_buf, self.leaf_cnt, self.free_rows,
                      self.centers, self.radii)

    def query_max_radius(self, point: np.ndarray) -> tuple[float, Optional[int]]:
        """Largest radius centered at `point` that avoids every sphere and wall.

        Returns (radius, nearest sphere id); the id is None when a wall is
        the limiting constraint.  A negative radius means the point lies
        inside a sphere.
        """
        p = np.ascontiguousarray(point, dtype=np.float64)
        if p.shape != (self.box.dimension,):
            raise ValueError(f"point must have {self.box.dimension} coordinates")
        if not self.box.contains(p):
            raise ValueError(f"point {p} outside box [0, {self.box.side}]^{self.box.dimension}")
        # per-call scratch so concurrent read-only queries stay safe
        stack_node = np.empty(max(int(self.meta[K.NNODES]), 1), dtype=np.int64)
        stack_lb = np.empty(stack_node.size, dtype=np.float64)
        r, sid = K.query_max_radius(p, self.box.side, self.meta, self.node_lo,
                                    self.node_hi, self.node_left, self.node_right,
                                    self.node_row, self.leaf_buf, self.leaf_cnt,
                                    self.centers, self.radii, stack_node, stack_lb)
        return float(r), (int(sid) if sid >= 0 else None)

    def query_stats(self, point: np.ndarray) -> tuple[float, Optional[int], int]:
        """Like query_max_radius, plus the number of tree nodes visited."""
        p = np.ascontiguousarray(point, dtype=np.float64)
        stack_node = np.empty(max(int(self.meta[K.NNODES]), 1), dtype=np.int64)
        stack_lb = np.empty(stack_node.size, dtype=np.float64)
        r, sid, visited = K.query_max_radius_stats(
            p, self.box.side, self.meta, self.node_lo, self.node_hi,
            self.node_left, self.node_right, self.node_row, self.leaf_buf,
            self.leaf_cnt, self.centers, self.radii, stack_node, stack_lb)
        return float(r), (int(sid) if sid >= 0 else None), int(visited)

    def node(self, index: int) -> BvhNode:
        left = int(self.node_left[index])
        if left < 0:
            row = int(self.node_row[index])
            ids = self.leaf_buf[row, : int(self.leaf_cnt[row])].copy()
            return BvhNode(index, self.node_lo[index].copy(), self.node_hi[index].copy(),
                           ids, None, None)
        return BvhNode(index, self.node_lo[index].copy(), self.node_hi[index].copy(),
                       np.empty(0, dtype=np.int64), left, int(self.node_right[index]))

    def nodes(self) -> Iterator[BvhNode]:
        """Iterate over all current nodes (root first when nonempty)."""
        for i in range(int(self.meta[K.NNODES])):
            yield self.node(i)

    @property
    def n_nodes(self) -> int:
        return int(self.meta[K.NNODES])
