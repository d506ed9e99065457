"""Random Apollonian packing generator.

Spheres nucleate at uniform random sites; a site inside an existing sphere
is rejected and redrawn, otherwise the sphere takes the largest radius that
avoids every sphere and wall.  The packing keeps streaming moment sums
M_alpha(n) = sum r_k^alpha, the pore volume, a log-radius histogram, and
log-spaced checkpoints of all of the above.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import _kernels as K
from ._util import fmt17, format_alpha, parse_alpha
from .bvh import DEFAULT_LEAF_CAPACITY, SphereTree
from .geometry import BoxDomain, Sphere, unit_ball_volume

__all__ = [
    "PackingConfig",
    "MomentAccumulator",
    "Packing",
    "SnapshotSeries",
    "ProbeResult",
    "SaturationError",
    "PackingFormatError",
    "default_alphas",
    "snapshot_grid",
    "run",
    "probe_insertions",
    "export_packing_csv",
    "load_packing_csv",
    "export_probe_csv",
    "export_probe_summary",
]

MAX_STEP_ATTEMPTS = 10**9


class SaturationError(RuntimeError):
    """One insertion exhausted its rejection budget: the pore is too tight."""


class PackingFormatError(ValueError):
    """A packing CSV could not be parsed."""


def default_alphas(dimension: int) -> tuple[Fraction, ...]:
    """Moment orders tracked by default: {1/2, 1, 3/2, 2, 3, 4} up to d."""
    candidates = (Fraction(1, 2), Fraction(1), Fraction(3, 2),
                  Fraction(2), Fraction(3), Fraction(4))
    return tuple(a for a in candidates if a <= dimension)


@dataclass(frozen=True)
class PackingConfig:
    """Everything needed to reproduce one packing bit-for-bit."""

    dimension: int
    side: float
    n_spheres: int
    seed: int
    alphas: tuple[Fraction, ...] = ()
    snapshots_per_decade: int = 64
    hist_bins_per_decade: int = 256
    leaf_capacity: int = DEFAULT_LEAF_CAPACITY
    max_step_attempts: int = MAX_STEP_ATTEMPTS

    def __post_init__(self):
        if self.dimension not in (2, 3, 4):
            raise ValueError(f"dimension must be 2, 3 or 4, got {self.dimension}")
        if not (self.side > 0 and math.isfinite(self.side)):
            raise ValueError(f"side must be positive, got {self.side}")
        if self.n_spheres < 0:
            raise ValueError(f"n_spheres must be >= 0, got {self.n_spheres}")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in 64 bits")
        alphas = tuple(Fraction(a) for a in self.alphas) or default_alphas(self.dimension)
        if any(a < 0 for a in alphas):
            raise ValueError("moment orders must be nonnegative")
        if Fraction(self.dimension) not in alphas:
            # the pore volume needs M_d
            alphas = tuple(sorted(set(alphas) | {Fraction(self.dimension)}))
        else:
            alphas = tuple(sorted(set(alphas)))
        object.__setattr__(self, "alphas", alphas)
        if self.snapshots_per_decade < 1:
            raise ValueError("snapshots_per_decade must be >= 1")

    @property
    def box(self) -> BoxDomain:
        return BoxDomain(self.dimension, self.side)


def snapshot_grid(n: int, per_decade: int = 64) -> np.ndarray:
    """Log-spaced integer checkpoints 1..n (~per_decade per decade), incl. n."""
    if n <= 0:
        return np.empty(0, dtype=np.int64)
    n_steps = int(math.ceil(per_decade * math.log10(n))) if n > 1 else 0
    vals = np.unique(np.rint(10 ** (np.arange(n_steps + 1) / per_decade)).astype(np.int64))
    vals = vals[(vals >= 1) & (vals <= n)]
    if vals.size == 0 or vals[-1] != n:
        vals = np.append(vals, n)
    return vals.astype(np.int64)


class MomentAccumulator:
    """Kahan-compensated running sums M_alpha(n) over inserted radii."""

    def __init__(self, alphas: Sequence[Fraction]):
        self.alphas = tuple(Fraction(a) for a in alphas)
        self.alpha_floats = np.array([float(a) for a in self.alphas], dtype=np.float64)
        self.sums = np.zeros(len(self.alphas), dtype=np.float64)
        self.comps = np.zeros(len(self.alphas), dtype=np.float64)

    def value(self, alpha) -> float:
        return float(self.sums[self.alphas.index(Fraction(alpha))])

    def as_dict(self) -> dict[Fraction, float]:
        return {a: float(s) for a, s in zip(self.alphas, self.sums)}


class Packing:
    """A (possibly growing) random Apollonian packing."""

    def __init__(self, config: PackingConfig):
        self.config = config
        self.box = config.box
        self.seed = config.seed
        self.tree = SphereTree(self.box, leaf_capacity=config.leaf_capacity,
                               capacity=max(config.n_spheres, 16))
        self.accumulator = MomentAccumulator(config.alphas)
        self._d_index = self.accumulator.alphas.index(Fraction(config.dimension))
        self._rng = np.array([np.uint64(config.seed)], dtype=np.uint64)
        self._vd = unit_ball_volume(config.dimension)
        # log-radius histogram: hist_bins_per_decade bins, 10 decades below L
        w = math.log(10.0) / config.hist_bins_per_decade
        self.hist_lo = math.log(config.side) - 10.0 * math.log(10.0)
        nb = int(math.ceil((math.log(config.side / 2.0) - self.hist_lo) / w)) + 1
        self.hist_width = w
        self.hist = np.zeros(nb, dtype=np.int64)
        self._point = np.empty(config.dimension, dtype=np.float64)

    # -- basic accessors ------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.tree)

    @property
    def radii(self) -> np.ndarray:
        return self.tree.sphere_radii

    @property
    def centers(self) -> np.ndarray:
        return self.tree.sphere_centers

    @property
    def attempts(self) -> int:
        return int(self.tree.meta[K.ATTEMPTS])

    @property
    def pore_volume(self) -> float:
        return self.box.volume - self._vd * float(self.accumulator.sums[self._d_index])

    @property
    def packing_fraction(self) -> float:
        return 1.0 - self.pore_volume / self.box.volume

    def hist_edges(self) -> np.ndarray:
        """ln-r bin edges of the running radius histogram."""
        return self.hist_lo + self.hist_width * np.arange(self.hist.size + 1)

    def moments(self, alphas: Sequence) -> list[float]:
        """Recompute sum r_k^alpha from the stored radii for each alpha."""
        out = []
        r = self.radii
        for a in alphas:
            af = float(Fraction(a))
            if af < 0:
                raise ValueError(f"moment order must be >= 0, got {a}")
            out.append(float(np.sum(r**af)) if af != 0 else float(self.n))
        return out

    def moment_map(self) -> dict[Fraction, float]:
        """Streaming M_alpha values keyed by order (plus M_0 = n)."""
        out = {Fraction(0): float(self.n)}
        out.update(self.accumulator.as_dict())
        return out

    # -- growth ----------------------------------------------------------------

    def _run_to(self, n_target: int, ckpt_ns: np.ndarray, out_M: np.ndarray,
                out_pore: np.ndarray, out_hist: np.ndarray) -> None:
        self.tree._ensure_room(n_target - self.n)
        t = self.tree
        status = K.run_packing(
            n_target, self.config.max_step_attempts, self.box.side, self._vd,
            self._rng, t.meta, t.node_lo, t.node_hi, t.node_left, t.node_right,
            t.node_row, t.leaf_buf, t.leaf_cnt, t.free_rows, t.centers, t.radii,
            self.accumulator.alpha_floats, self.accumulator.sums,
            self.accumulator.comps, self._d_index,
            ckpt_ns, out_M, out_pore, out_hist,
            self.hist, self.hist_lo, 1.0 / self.hist_width,
            t._scratch_node, t._scratch_lb, self._point)
        if status != 0:
            raise SaturationError(
                f"insertion {self.n + 1} exceeded {self.config.max_step_attempts} "
                f"rejections (packing fraction {self.packing_fraction:.6f})")

    def step(self) -> Sphere:
        """Insert one sphere and return it."""
        no_ck = np.empty(0, dtype=np.int64)
        no_M = np.empty((0, len(self.accumulator.alphas)), dtype=np.float64)
        no_pore = np.empty(0, dtype=np.float64)
        no_hist = np.empty((0, self.hist.size), dtype=np.int64)
        self._run_to(self.n + 1, no_ck, no_M, no_pore, no_hist)
        sid = self.n - 1
        return Sphere(self.centers[sid].copy(), float(self.radii[sid]))


@dataclass
class SnapshotSeries:
    """Checkpointed M_alpha(n), pore volume, and radius histograms."""

    ns: np.ndarray
    alphas: tuple[Fraction, ...]
    M: np.ndarray          # (n_checkpoints, n_alphas)
    pore: np.ndarray       # (n_checkpoints,)
    hist: Optional[np.ndarray] = None        # (n_checkpoints, n_bins) counts
    hist_lo: Optional[float] = None
    hist_width: Optional[float] = None
    seed: Optional[int] = None

    def checkpoint_index(self, n: int) -> int:
        idx = np.searchsorted(self.ns, n)
        if idx >= self.ns.size or self.ns[idx] != n:
            raise KeyError(f"no checkpoint at n={n}; available: {self.ns.tolist()}")
        return int(idx)

    def moment_series(self, alpha) -> np.ndarray:
        try:
            col = self.alphas.index(Fraction(alpha))
        except ValueError:
            raise KeyError(
                f"moment order {alpha} not in snapshots; available: "
                f"{[format_alpha(a) for a in self.alphas]}") from None
        return self.M[:, col]

    # -- serialization ---------------------------------------------------------

    def to_jsonl(self, path) -> None:
        keys = [format_alpha(a) for a in self.alphas]
        with open(path, "w") as fh:
            for i, n in enumerate(self.ns):
                ms = ",".join(f'"{k}":{fmt17(self.M[i, j])}' for j, k in enumerate(keys))
                fh.write(f'{{"n":{int(n)},"M":{{{ms}}},"pore":{fmt17(self.pore[i])}}}\n')

    def hist_to_jsonl(self, path) -> None:
        if self.hist is None:
            raise ValueError("this series carries no radius histograms")
        with open(path, "w") as fh:
            fh.write(json.dumps({"type": "log_radius_hist", "lo": self.hist_lo,
                                 "width": self.hist_width,
                                 "bins": int(self.hist.shape[1])}) + "\n")
            for i, n in enumerate(self.ns):
                fh.write(f'{{"n":{int(n)},"counts":{json.dumps(self.hist[i].tolist())}}}\n')

    @classmethod
    def from_jsonl(cls, path, hist_path=None) -> "SnapshotSeries":
        ns, rows, pores = [], [], []
        alphas = None
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if alphas is None:
                    alphas = tuple(parse_alpha(k) for k in rec["M"])
                ns.append(int(rec["n"]))
                rows.append([float(rec["M"][format_alpha(a)]) for a in alphas])
                pores.append(float(rec["pore"]))
        if alphas is None:
            raise ValueError(f"no checkpoints found in {path}")
        series = cls(np.asarray(ns, dtype=np.int64), alphas,
                     np.asarray(rows, dtype=np.float64),
                     np.asarray(pores, dtype=np.float64))
        if hist_path is not None and Path(hist_path).exists():
            with open(hist_path) as fh:
                head = json.loads(fh.readline())
                counts = []
                for line in fh:
                    line = line.strip()
                    if line:
                        counts.append(json.loads(line)["counts"])
            series.hist = np.asarray(counts, dtype=np.int64)
            series.hist_lo = float(head["lo"])
            series.hist_width = float(head["width"])
        return series


@dataclass
class ProbeResult:
    """Outcome of test insertions into a frozen packing."""

    attempts: int
    inside_rejections: int
    radii: np.ndarray      # maximal radii of accepted probes, in draw order
    seed: int
    packing_n: int = 0

    def __post_init__(self):
        if self.attempts != self.inside_rejections + self.radii.size:
            raise ValueError("attempts must equal rejections + accepted probes")

    def empirical_cdf(self, r: np.ndarray) -> np.ndarray:
        """P(r' > r) over accepted probes; equals 1 at r = 0."""
        sorted_r = np.sort(self.radii)
        r = np.asarray(r, dtype=np.float64)
        return 1.0 - np.searchsorted(sorted_r, r, side="right") / sorted_r.size

    def log_histogram(self, bins: int = 256) -> tuple[np.ndarray, np.ndarray]:
        """(ln-r bin centers, density) estimating -dP/d ln r."""
        ln_r = np.log(self.radii)
        counts, edges = np.histogram(ln_r, bins=bins)
        width = edges[1] - edges[0]
        centers = 0.5 * (edges[:-1] + edges[1:])
        return centers, counts / (self.radii.size * width)


def run(config: PackingConfig) -> tuple[Packing, SnapshotSeries]:
    """Generate a packing of config.n_spheres spheres with checkpoints.

    Deterministic: the same config (seed included) reproduces the same
    radii, checkpoints and exported bytes.
    """
    packing = Packing(config)
    ckpts = snapshot_grid(config.n_spheres, config.snapshots_per_decade)
    out_M = np.zeros((ckpts.size, len(packing.accumulator.alphas)), dtype=np.float64)
    out_pore = np.zeros(ckpts.size, dtype=np.float64)
    out_hist = np.zeros((ckpts.size, packing.hist.size), dtype=np.int64)
    if config.n_spheres > 0:
        packing._run_to(config.n_spheres, ckpts, out_M, out_pore, out_hist)
    series = SnapshotSeries(ckpts, packing.accumulator.alphas, out_M, out_pore,
                            hist=out_hist, hist_lo=packing.hist_lo,
                            hist_width=packing.hist_width, seed=config.seed)
    return packing, series


def probe_insertions(packing: Packing, count: int, seed: int) -> ProbeResult:
    """Attempt `count` test insertions into a frozen packing.

    Records the maximal radius of every accepted probe (site outside all
    spheres); the packing is left untouched.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    t = packing.tree
    out = np.empty(count, dtype=np.float64)
    stack_node = np.empty(max(t.n_nodes, 1), dtype=np.int64)
    stack_lb = np.empty(stack_node.size, dtype=np.float64)
    n_acc = K.probe_packing(count, np.uint64(seed), packing.box.side, t.meta,
                            t.node_lo, t.node_hi, t.node_left, t.node_right,
                            t.node_row, t.leaf_buf, t.leaf_cnt, t.centers,
                            t.radii, stack_node, stack_lb, out)
    return ProbeResult(attempts=count, inside_rejections=count - int(n_acc),
                       radii=out[:int(n_acc)].copy(), seed=int(seed),
                       packing_n=packing.n)


# -- file formats ----------------------------------------------------------------


def export_packing_csv(packing: Packing, path) -> None:
    """Write `dim,side,seed` header lines then one `x1,...,xd,r` row per sphere."""
    centers = packing.centers
    radii = packing.radii
    with open(path, "w") as fh:
        fh.write("dim,side,seed\n")
        fh.write(f"{packing.box.dimension},{fmt17(packing.box.side)},{packing.seed}\n")
        for i in range(packing.n):
            coords = ",".join(fmt17(c) for c in centers[i])
            fh.write(f"{coords},{fmt17(radii[i])}\n")


def load_packing_csv(path, leaf_capacity: int = DEFAULT_LEAF_CAPACITY) -> Packing:
    """Load a packing CSV and rebuild its spatial index (insertion order).

    The rejection/attempt history is not stored in the file, so `attempts`
    restarts at zero on the loaded object.
    """
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "dim,side,seed":
        raise PackingFormatError(f"{path}: line 1: expected header 'dim,side,seed'")
    if len(lines) < 2:
        raise PackingFormatError(f"{path}: line 2: missing dim,side,seed values")
    try:
        dim_s, side_s, seed_s = lines[1].split(",")
        dim, side, seed = int(dim_s), float(side_s), int(seed_s)
    except ValueError as exc:
        raise PackingFormatError(f"{path}: line 2: bad dim,side,seed values: {exc}") from None

    rows = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != dim + 1:
            raise PackingFormatError(
                f"{path}: line {lineno}: expected {dim + 1} fields, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise PackingFormatError(f"{path}: line {lineno}: {exc}") from None

    data = np.asarray(rows, dtype=np.float64).reshape(len(rows), dim + 1)
    if np.any(~np.isfinite(data)):
        raise PackingFormatError(f"{path}: non-finite values in sphere rows")
    if np.any(data[:, dim] <= 0):
        bad = int(np.argmax(data[:, dim] <= 0)) + 3
        raise PackingFormatError(f"{path}: line {bad}: non-positive radius")

    config = PackingConfig(dimension=dim, side=side, n_spheres=len(rows), seed=seed,
                           leaf_capacity=leaf_capacity)
    packing = Packing(config)
    if rows:
        packing.tree.extend(data[:, :dim], data[:, dim])
        # rebuild streaming sums and histogram to match the stored radii
        r = packing.radii
        for j, a in enumerate(packing.accumulator.alpha_floats):
            packing.accumulator.sums[j] = math.fsum(r**a)
        bins = np.clip(((np.log(r) - packing.hist_lo) / packing.hist_width).astype(np.int64),
                       0, packing.hist.size - 1)
        np.add.at(packing.hist, bins, 1)
    return packing


def export_probe_csv(result: ProbeResult, path, bins: int = 256,
                     model_densities: Optional[Mapping[str, np.ndarray]] = None) -> None:
    """Write the probe density table `ln_r_bin_center,density[,<model>...]`.

    `model_densities` maps column name -> density values evaluated on the
    same ln-r bin centers (see analysis.compare_probe_to_model).
    """
    centers, density = result.log_histogram(bins)
    names = list(model_densities) if model_densities else []
    with open(path, "w") as fh:
        fh.write(",".join(["ln_r_bin_center", "density"] + names) + "\n")
        for i in range(centers.size):
            cols = [fmt17(centers[i]), fmt17(density[i])]
            cols += [fmt17(model_densities[name][i]) for name in names]
            fh.write(",".join(cols) + "\n")


def export_probe_summary(result: ProbeResult, path, extra: Optional[dict] = None) -> None:
    """Sidecar JSON with attempt/rejection counts (plus any extra metrics)."""
    payload = {
        "attempts": result.attempts,
        "inside_rejections": result.inside_rejections,
        "accepted": int(result.radii.size),
        "seed": result.seed,
        "packing_n": result.packing_n,
    }
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
