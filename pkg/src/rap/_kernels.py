"""Numba kernels for the packing simulator.

Everything below operates on flat preallocated arrays owned by the Python
wrappers in `bvh` and `packer`.  Layout:

  meta        int64[8]   counters: [n_spheres, n_nodes, n_rows, free_top,
                                     attempts, -, -, -]
  centers     float64[cap_spheres, d]
  radii       float64[cap_spheres]
  node_lo/hi  float64[cap_nodes, d]   bounding box over member ball extents
  node_left   int64[cap_nodes]        -1 for leaves
  node_right  int64[cap_nodes]
  node_row    int64[cap_nodes]        leaf buffer row, -1 for internal nodes
  leaf_buf    int64[cap_rows, leaf_capacity + 1]
  leaf_cnt    int64[cap_rows]
  free_rows   int64[cap_rows]         recycled buffer rows (stack)

The RNG is splitmix64 with the state held in a uint64[1] array.  Streams
seeded with base_seed + replica_index walk arithmetic progressions with the
same odd increment, so two streams cannot collide before ~2^63 draws.

No fastmath anywhere: query results must be bit-identical to a brute-force
scan and the Kahan-compensated moment sums rely on strict IEEE ordering.
"""

import math

import numpy as np
from numba import njit

# meta slots
NSPH = 0
NNODES = 1
NROWS = 2
FREETOP = 3
ATTEMPTS = 4

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53

# One-sided slack on pruning bounds.  A node may only be skipped when its
# box distance clearly exceeds the current best gap; the margin (1e-12
# relative) dwarfs the ~1e-16 rounding of the bound itself, so pruning can
# never drop a sphere whose computed gap improves on the running minimum.
_PRUNE_SLACK = 1.0 - 1e-12


@njit(cache=True, nogil=True, inline="always")
def _next_uniform(rng):
    """Advance the splitmix64 state and return a uniform double in [0, 1)."""
    s = rng[0] + _GOLDEN
    rng[0] = s
    z = (s ^ (s >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)) * _INV53


@njit(cache=True, nogil=True)
def rng_uniforms(seed, out):
    """Fill `out` with the uniform stream of `seed` (reference helper)."""
    rng = np.empty(1, dtype=np.uint64)
    rng[0] = seed
    for i in range(out.size):
        out[i] = _next_uniform(rng)


@njit(cache=True, nogil=True, inline="always")
def _alloc_row(meta, free_rows):
    if meta[FREETOP] > 0:
        meta[FREETOP] -= 1
        return free_rows[meta[FREETOP]]
    row = meta[NROWS]
    meta[NROWS] = row + 1
    return row


@njit(cache=True, nogil=True, inline="always")
def _refit_leaf_bbox(nid, row, node_lo, node_hi, leaf_buf, leaf_cnt, centers, radii):
    d = node_lo.shape[1]
    cnt = leaf_cnt[row]
    sid0 = leaf_buf[row, 0]
    r0 = radii[sid0]
    for k in range(d):
        node_lo[nid, k] = centers[sid0, k] - r0
        node_hi[nid, k] = centers[sid0, k] + r0
    for i in range(1, cnt):
        sid = leaf_buf[row, i]
        r = radii[sid]
        for k in range(d):
            lo = centers[sid, k] - r
            hi = centers[sid, k] + r
            if lo < node_lo[nid, k]:
                node_lo[nid, k] = lo
            if hi > node_hi[nid, k]:
                node_hi[nid, k] = hi


@njit(cache=True, nogil=True)
def _split_leaf(nid, meta, node_lo, node_hi, node_left, node_right, node_row,
                leaf_buf, leaf_cnt, free_rows, centers, radii):
    """Median-split an over-full leaf along the widest axis of its bbox."""
    d = node_lo.shape[1]
    row = node_row[nid]
    m = leaf_cnt[row]
    ids = leaf_buf[row, :m].copy()

    axis = 0
    widest = node_hi[nid, 0] - node_lo[nid, 0]
    for k in range(1, d):
        w = node_hi[nid, k] - node_lo[nid, k]
        if w > widest:
            widest = w
            axis = k
    keys = np.empty(m, dtype=np.float64)
    for i in range(m):
        keys[i] = centers[ids[i], axis]
    order = np.argsort(keys)
    n_left = (m + 1) // 2

    a = meta[NNODES]
    b = a + 1
    meta[NNODES] = a + 2

    row_a = row  # parent's buffer row is recycled for the left child
    row_b = _alloc_row(meta, free_rows)

    for i in range(m - n_left):
        leaf_buf[row_b, i] = ids[order[n_left + i]]
    leaf_cnt[row_b] = m - n_left
    for i in range(n_left):
        leaf_buf[row_a, i] = ids[order[i]]
    leaf_cnt[row_a] = n_left

    node_left[a] = -1
    node_right[a] = -1
    node_row[a] = row_a
    _refit_leaf_bbox(a, row_a, node_lo, node_hi, leaf_buf, leaf_cnt, centers, radii)

    node_left[b] = -1
    node_right[b] = -1
    node_row[b] = row_b
    _refit_leaf_bbox(b, row_b, node_lo, node_hi, leaf_buf, leaf_cnt, centers, radii)

    node_left[nid] = a
    node_right[nid] = b
    node_row[nid] = -1


@njit(cache=True, nogil=True)
def tree_insert(sid, meta, node_lo, node_hi, node_left, node_right, node_row,
                leaf_buf, leaf_cnt, free_rows, centers, radii):
    """Insert sphere `sid` (already stored in centers/radii) into the tree."""
    d = node_lo.shape[1]
    r = radii[sid]
    leaf_capacity = leaf_buf.shape[1] - 1

    if meta[NNODES] == 0:
        meta[NNODES] = 1
        row = _alloc_row(meta, free_rows)
        node_left[0] = -1
        node_right[0] = -1
        node_row[0] = row
        for k in range(d):
            node_lo[0, k] = centers[sid, k] - r
            node_hi[0, k] = centers[sid, k] + r
        leaf_buf[row, 0] = sid
        leaf_cnt[row] = 1
        return

    nid = 0
    while True:
        for k in range(d):
            lo = centers[sid, k] - r
            hi = centers[sid, k] + r
            if lo < node_lo[nid, k]:
                node_lo[nid, k] = lo
            if hi > node_hi[nid, k]:
                node_hi[nid, k] = hi
        a = node_left[nid]
        if a < 0:
            break
        b = node_right[nid]
        # descend into the child needing the least extent growth;
        # ties go to the smaller box, then to the left child
        ga = 0.0
        gb = 0.0
        pa = 0.0
        pb = 0.0
        for k in range(d):
            lo = centers[sid, k] - r
            hi = centers[sid, k] + r
            ea = node_hi[a, k] - node_lo[a, k]
            eb = node_hi[b, k] - node_lo[b, k]
            pa += ea
            pb += eb
            la = node_lo[a, k] if node_lo[a, k] < lo else lo
            ha = node_hi[a, k] if node_hi[a, k] > hi else hi
            lb = node_lo[b, k] if node_lo[b, k] < lo else lo
            hb = node_hi[b, k] if node_hi[b, k] > hi else hi
            ga += (ha - la) - ea
            gb += (hb - lb) - eb
        if ga < gb:
            nid = a
        elif gb < ga:
            nid = b
        elif pa <= pb:
            nid = a
        else:
            nid = b

    row = node_row[nid]
    c = leaf_cnt[row]
    leaf_buf[row, c] = sid
    leaf_cnt[row] = c + 1
    if c + 1 > leaf_capacity:
        _split_leaf(nid, meta, node_lo, node_hi, node_left, node_right,
                    node_row, leaf_buf, leaf_cnt, free_rows, centers, radii)


@njit(cache=True, nogil=True, inline="always")
def _bbox_lb(point, nid, node_lo, node_hi):
    d = node_lo.shape[1]
    s = 0.0
    for k in range(d):
        v = point[k]
        e = node_lo[nid, k] - v
        if e > 0.0:
            s += e * e
        else:
            e = v - node_hi[nid, k]
            if e > 0.0:
                s += e * e
    return math.sqrt(s)


@njit(cache=True, nogil=True)
def query_max_radius(point, side, meta, node_lo, node_hi, node_left, node_right,
                     node_row, leaf_buf, leaf_cnt, centers, radii,
                     stack_node, stack_lb):
    """Largest non-overlapping radius at `point`: min(wall gap, sphere gaps).

    Returns (radius, nearest sphere id or -1 when a wall limits).  Negative
    radius means the point lies inside a sphere.  Branch-and-bound over the
    tree; the result is bit-identical to a linear scan because pruned nodes
    provably contain no sphere with a smaller gap than the running best.
    """
    d = centers.shape[1]
    best = side
    for k in range(d):
        v = point[k]
        if v < best:
            best = v
        w = side - v
        if w < best:
            best = w
    best_id = -1
    if meta[NNODES] == 0:
        return best, best_id

    stack_node[0] = 0
    stack_lb[0] = 0.0
    sp = 1
    while sp > 0:
        sp -= 1
        if stack_lb[sp] * _PRUNE_SLACK > best:
            continue
        nid = stack_node[sp]
        left = node_left[nid]
        if left < 0:
            row = node_row[nid]
            cnt = leaf_cnt[row]
            for i in range(cnt):
                sid = leaf_buf[row, i]
                ss = 0.0
                for k in range(d):
                    diff = point[k] - centers[sid, k]
                    ss += diff * diff
                rs = radii[sid]
                t = best + rs
                if t <= 0.0:
                    continue
                if ss * _PRUNE_SLACK > t * t:
                    continue
                g = math.sqrt(ss) - rs
                if g < best:
                    best = g
                    best_id = sid
            continue
        right = node_right[nid]
        lb_l = _bbox_lb(point, left, node_lo, node_hi)
        lb_r = _bbox_lb(point, right, node_lo, node_hi)
        # push the farther child first so the nearer one is explored first
        if lb_l <= lb_r:
            if lb_r * _PRUNE_SLACK <= best:
                stack_node[sp] = right
                stack_lb[sp] = lb_r
                sp += 1
            if lb_l * _PRUNE_SLACK <= best:
                stack_node[sp] = left
                stack_lb[sp] = lb_l
                sp += 1
        else:
            if lb_l * _PRUNE_SLACK <= best:
                stack_node[sp] = left
                stack_lb[sp] = lb_l
                sp += 1
            if lb_r * _PRUNE_SLACK <= best:
                stack_node[sp] = right
                stack_lb[sp] = lb_r
                sp += 1
    return best, best_id


@njit(cache=True, nogil=True)
def point_in_sphere(point, meta, node_lo, node_hi, node_left, node_right,
                    node_row, leaf_buf, leaf_cnt, centers, radii, stack_node):
    """True iff `point` lies strictly inside some sphere (gap < 0).

    Only nodes whose box contains the point can hold a containing sphere
    (each ball's extent box lies inside its node's box), so everything else
    is pruned outright.  The sign test matches query_max_radius exactly:
    sqrt(ss) - r < 0, with the sqrt taken only when ss is within rounding
    slack of r^2.
    """
    d = centers.shape[1]
    if meta[NNODES] == 0:
        return False
    stack_node[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        nid = stack_node[sp]
        outside = False
        for k in range(d):
            v = point[k]
            if v < node_lo[nid, k] or v > node_hi[nid, k]:
                outside = True
                break
        if outside:
            continue
        left = node_left[nid]
        if left < 0:
            row = node_row[nid]
            cnt = leaf_cnt[row]
            for i in range(cnt):
                sid = leaf_buf[row, i]
                ss = 0.0
                for k in range(d):
                    diff = point[k] - centers[sid, k]
                    ss += diff * diff
                rs = radii[sid]
                if ss >= rs * rs * (1.0 + 1e-12):
                    continue
                if math.sqrt(ss) - rs < 0.0:
                    return True
            continue
        stack_node[sp] = left
        stack_node[sp + 1] = node_right[nid]
        sp += 2
    return False


@njit(cache=True, nogil=True)
def query_max_radius_stats(point, side, meta, node_lo, node_hi, node_left,
                           node_right, node_row, leaf_buf, leaf_cnt, centers,
                           radii, stack_node, stack_lb):
    """query_max_radius variant that also counts the nodes actually visited."""
    d = centers.shape[1]
    best = side
    for k in range(d):
        v = point[k]
        if v < best:
            best = v
        w = side - v
        if w < best:
            best = w
    best_id = -1
    visited = 0
    if meta[NNODES] == 0:
        return best, best_id, visited

    stack_node[0] = 0
    stack_lb[0] = 0.0
    sp = 1
    while sp > 0:
        sp -= 1
        if stack_lb[sp] * _PRUNE_SLACK > best:
            continue
        nid = stack_node[sp]
        visited += 1
        left = node_left[nid]
        if left < 0:
            row = node_row[nid]
            cnt = leaf_cnt[row]
            for i in range(cnt):
                sid = leaf_buf[row, i]
                ss = 0.0
                for k in range(d):
                    diff = point[k] - centers[sid, k]
                    ss += diff * diff
                rs = radii[sid]
                t = best + rs
                if t <= 0.0:
                    continue
                if ss * _PRUNE_SLACK > t * t:
                    continue
                g = math.sqrt(ss) - rs
                if g < best:
                    best = g
                    best_id = sid
            continue
        right = node_right[nid]
        lb_l = _bbox_lb(point, left, node_lo, node_hi)
        lb_r = _bbox_lb(point, right, node_lo, node_hi)
        if lb_l <= lb_r:
            if lb_r * _PRUNE_SLACK <= best:
                stack_node[sp] = right
                stack_lb[sp] = lb_r
                sp += 1
            if lb_l * _PRUNE_SLACK <= best:
                stack_node[sp] = left
                stack_lb[sp] = lb_l
                sp += 1
        else:
            if lb_l * _PRUNE_SLACK <= best:
                stack_node[sp] = left
                stack_lb[sp] = lb_l
                sp += 1
            if lb_r * _PRUNE_SLACK <= best:
                stack_node[sp] = right
                stack_lb[sp] = lb_r
                sp += 1
    return best, best_id, visited


@njit(cache=True, nogil=True)
def bulk_insert(n, meta, node_lo, node_hi, node_left, node_right, node_row,
                leaf_buf, leaf_cnt, free_rows, centers, radii):
    """Index spheres [meta[NSPH], n) that are already stored in centers/radii."""
    for sid in range(meta[NSPH], n):
        meta[NSPH] = sid + 1
        tree_insert(sid, meta, node_lo, node_hi, node_left, node_right,
                    node_row, leaf_buf, leaf_cnt, free_rows, centers, radii)


@njit(cache=True, nogil=True)
def run_packing(n_target, max_step_attempts, side, vd, rng, meta,
                node_lo, node_hi, node_left, node_right, node_row,
                leaf_buf, leaf_cnt, free_rows, centers, radii,
                alphas, msums, mcomps, d_index,
                ckpt_ns, out_M, out_pore, out_hist,
                hist, hist_lo, hist_inv_w,
                stack_node, stack_lb, point):
    """Sequential random-insertion loop.

    Draws uniform nucleation sites, rejects those inside a sphere, inserts
    at the maximal free radius, and maintains streaming moment sums, the
    log-radius histogram, and log-spaced checkpoints.  Returns 0 on success,
    1 when one insertion exceeds `max_step_attempts` rejections.
    """
    d = centers.shape[1]
    vol = side**d
    na = alphas.size
    nck = ckpt_ns.size
    nb = hist.size
    next_ck = 0
    while next_ck < nck and ckpt_ns[next_ck] <= meta[NSPH]:
        next_ck += 1

    for j in range(meta[NSPH], n_target):
        attempts = 0
        r = -1.0
        while True:
            attempts += 1
            if attempts > max_step_attempts:
                meta[ATTEMPTS] += attempts - 1
                return 1
            for k in range(d):
                point[k] = side * _next_uniform(rng)
            # cheap reject first: most draws land inside a sphere once the
            # packing is dense, and those never need the exact minimum gap
            if point_in_sphere(point, meta, node_lo, node_hi, node_left,
                               node_right, node_row, leaf_buf, leaf_cnt,
                               centers, radii, stack_node):
                continue
            r, _sid = query_max_radius(point, side, meta, node_lo, node_hi,
                                       node_left, node_right, node_row,
                                       leaf_buf, leaf_cnt, centers, radii,
                                       stack_node, stack_lb)
            if r > 0.0:
                break
        meta[ATTEMPTS] += attempts

        sid = meta[NSPH]
        for k in range(d):
            centers[sid, k] = point[k]
        radii[sid] = r
        meta[NSPH] = sid + 1
        tree_insert(sid, meta, node_lo, node_hi, node_left, node_right,
                    node_row, leaf_buf, leaf_cnt, free_rows, centers, radii)

        for a in range(na):
            val = r ** alphas[a]
            y = val - mcomps[a]
            t = msums[a] + y
            mcomps[a] = (t - msums[a]) - y
            msums[a] = t

        bi = int(math.floor((math.log(r) - hist_lo) * hist_inv_w))
        if bi < 0:
            bi = 0
        elif bi >= nb:
            bi = nb - 1
        hist[bi] += 1

        if next_ck < nck and sid + 1 == ckpt_ns[next_ck]:
            for a in range(na):
                out_M[next_ck, a] = msums[a]
            out_pore[next_ck] = vol - vd * msums[d_index]
            for b in range(nb):
                out_hist[next_ck, b] = hist[b]
            next_ck += 1
    return 0


@njit(cache=True, nogil=True)
def probe_packing(count, seed, side, meta, node_lo, node_hi, node_left,
                  node_right, node_row, leaf_buf, leaf_cnt, centers, radii,
                  stack_node, stack_lb, out_radii):
    """Test insertions into a frozen packing; returns how many were accepted.

    Accepted probes (maximal radius > 0) write that radius into `out_radii`
    in draw order; the packing itself is never modified.
    """
    rng = np.empty(1, dtype=np.uint64)
    rng[0] = seed
    d = centers.shape[1]
    point = np.empty(d, dtype=np.float64)
    n_acc = 0
    for _ in range(count):
        for k in range(d):
            point[k] = side * _next_uniform(rng)
        if point_in_sphere(point, meta, node_lo, node_hi, node_left,
                           node_right, node_row, leaf_buf, leaf_cnt,
                           centers, radii, stack_node):
            continue
        r, _sid = query_max_radius(point, side, meta, node_lo, node_hi,
                                   node_left, node_right, node_row,
                                   leaf_buf, leaf_cnt, centers, radii,
                                   stack_node, stack_lb)
        if r > 0.0:
            out_radii[n_acc] = r
            n_acc += 1
    return n_acc


@njit(cache=True, nogil=True)
def audit_packing(centers, radii, n, side, overlap_rel):
    """Exhaustive O(n^2) packing audit.

    Returns (overlap_count, worst_rel_clearance, wall_cross_count, contact)
    where contact[i] is the smallest surface-to-surface gap between sphere i
    and any other sphere or wall (tangency means contact[i] ~ 0).
    """
    d = centers.shape[1]
    contact = np.full(n, np.inf, dtype=np.float64)
    overlap_count = 0
    worst = 0.0
    wall_cross = 0
    for i in range(n):
        wg = np.inf
        for k in range(d):
            a = centers[i, k] - radii[i]
            b = side - centers[i, k] - radii[i]
            if a < wg:
                wg = a
            if b < wg:
                wg = b
        if wg < -overlap_rel * radii[i]:
            wall_cross += 1
        if wg < contact[i]:
            contact[i] = wg
        for j in range(i + 1, n):
            ss = 0.0
            for k in range(d):
                diff = centers[i, k] - centers[j, k]
                ss += diff * diff
            s = radii[i] + radii[j]
            gap = math.sqrt(ss) - s
            rel = gap / s
            if rel < -overlap_rel:
                overlap_count += 1
            if rel < worst:
                worst = rel
            if gap < contact[i]:
                contact[i] = gap
            if gap < contact[j]:
                contact[j] = gap
    return overlap_count, worst, wall_cross, contact


@njit(cache=True, nogil=True)
def mc_covered_count(centers, radii, n, side, samples, seed):
    """Count uniform sample points covered by at least one sphere."""
    rng = np.empty(1, dtype=np.uint64)
    rng[0] = seed
    d = centers.shape[1]
    point = np.empty(d, dtype=np.float64)
    hits = 0
    for _ in range(samples):
        for k in range(d):
            point[k] = side * _next_uniform(rng)
        for i in range(n):
            ss = 0.0
            for k in range(d):
                diff = point[k] - centers[i, k]
                ss += diff * diff
            if ss < radii[i] * radii[i]:
                hits += 1
                break
    return hits
