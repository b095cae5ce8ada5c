"""
GPIS Service.

The persistent clustered GPIS world model. Training points live on a uniform grid of
cells; every occupied cell caches a GP fitted on its 3x3x3 cell neighbourhood. A depth
scan updates the map by deleting, fusing or ignoring stored surface points against the
scan's 2.5D⁻¹ model, then inserting the newly observed surface.
"""

import itertools
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.spatial import cKDTree
from skimage import measure

from backend.models.gpis import GpisConfig, GpisPoint, GpisQuery, TriangleMesh, UpdateStats
from backend.models.kernels import Matern32Kernel
from backend.services.gp_core import (
    GpModel,
    gp_fit,
    mean_gradient_batch,
    predict_batch,
    predict_mean_batch,
    var_gradient_batch,
)
from backend.services.scan_service import (
    ScanGp,
    infer_batch,
    invert_batch,
    surface_samples,
    to_bearing_batch,
)
from backend.utils.exceptions import DomainError, SnapshotFormatError

logger = logging.getLogger(__name__)

Cell = Tuple[int, int, int]

SNAPSHOT_MAGIC = "PILEMAP-GPIS 1"
NORMAL_EPS = 1e-8
NEIGHBOUR_OFFSETS = tuple(itertools.product((-1, 0, 1), repeat=3))


def _neighbourhood(cell: Cell) -> List[Cell]:
    return [(cell[0] + dx, cell[1] + dy, cell[2] + dz) for dx, dy, dz in NEIGHBOUR_OFFSETS]


class GpisMap:
    """
    Clustered GPIS store with cached neighbourhood factorizations.

    Not safe for concurrent use while an update is running; queries may run
    concurrently with each other.
    """

    def __init__(self, config: Optional[GpisConfig] = None):
        """
        Initialize an empty map.

        Args:
            config (GpisConfig, optional): Map settings, defaults when omitted
        """
        self.config = config or GpisConfig()
        self.kernel = Matern32Kernel(length_scale=self.config.length_scale)
        self.cell_size = self.config.effective_cell_size
        self._positions = np.zeros((0, 3))
        self._targets = np.zeros(0)
        self._noises = np.zeros(0)
        self._groups = np.zeros(0, dtype=np.int64)
        self._next_group = 0
        self._clusters: Dict[Cell, np.ndarray] = {}
        self._models: Dict[Cell, Optional[GpModel]] = {}

    # ========== Accessors ==========

    @property
    def size(self) -> int:
        return int(self._targets.shape[0])

    @property
    def positions(self) -> np.ndarray:
        return self._positions.copy()

    @property
    def targets(self) -> np.ndarray:
        return self._targets.copy()

    @property
    def noises(self) -> np.ndarray:
        return self._noises.copy()

    @property
    def groups(self) -> np.ndarray:
        return self._groups.copy()

    @property
    def surface_mask(self) -> np.ndarray:
        return self._targets == 0.0

    @property
    def clusters(self) -> Dict[Cell, np.ndarray]:
        """Cell index → point indices (read-only view)."""
        return dict(self._clusters)

    def cell_of(self, points: np.ndarray) -> np.ndarray:
        return np.floor(np.atleast_2d(points) / self.cell_size).astype(np.int64)

    def cluster_points(self, cell: Cell) -> np.ndarray:
        """Positions of the points stored in one cell."""
        idx = self._clusters.get(tuple(cell))
        return self._positions[idx] if idx is not None else np.zeros((0, 3))

    def cluster_samples(self, cell: Cell) -> List[GpisPoint]:
        """Training samples stored in one cell, in storage order."""
        idx = self._clusters.get(tuple(cell), np.zeros(0, dtype=np.int64))
        return [
            GpisPoint(
                position=self._positions[i].copy(),
                target=float(self._targets[i]),
                noise=float(self._noises[i]),
                group=int(self._groups[i]),
            )
            for i in idx
        ]

    # ========== Storage ==========

    def _reindex(self):
        self._clusters = {}
        if self.size == 0:
            return
        keys, inverse = np.unique(self.cell_of(self._positions), axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        order = np.argsort(inverse, kind="stable")
        bounds = np.searchsorted(inverse[order], np.arange(keys.shape[0] + 1))
        for k, key in enumerate(keys):
            self._clusters[tuple(int(c) for c in key)] = order[bounds[k]:bounds[k + 1]]

    def _invalidate(self, cells: Iterable[Cell]) -> List[Cell]:
        """Drop cached models of the given cells and their neighbours."""
        touched = {tuple(int(c) for c in cell) for cell in cells}
        for cell in touched:
            for key in _neighbourhood(cell):
                self._models.pop(key, None)
        return sorted(touched)

    def _model_for(self, cell: Cell) -> Optional[GpModel]:
        """Cached GP over the 3x3x3 neighbourhood of ``cell``; None when it is empty."""
        if cell in self._models:
            return self._models[cell]
        parts = [self._clusters[key] for key in _neighbourhood(cell) if key in self._clusters]
        model = None
        if parts:
            idx = np.sort(np.concatenate(parts))
            model = gp_fit(self._positions[idx], self._targets[idx], self._noises[idx], self.kernel)
        self._models[cell] = model
        return model

    def _refactorize(self, cells: Sequence[Cell]) -> int:
        count = 0
        for cell in cells:
            if cell in self._clusters:
                self._model_for(cell)
                count += 1
        return count

    def insert_samples(
        self,
        points: np.ndarray,
        targets: np.ndarray,
        noises: Union[float, np.ndarray],
    ) -> int:
        """
        Insert raw training samples, each in its own group.

        Args:
            points (np.ndarray): (n, 3) world positions
            targets (np.ndarray): (n,) signed distances
            noises (float | np.ndarray): Noise variance(s)

        Returns:
            int: Number of inserted samples
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        targets = np.asarray(targets, dtype=float).reshape(-1)
        n = points.shape[0]
        noises = np.broadcast_to(np.asarray(noises, dtype=float), (n,))
        if targets.shape[0] != n or points.shape[1] != 3:
            raise DomainError("points must be (n, 3) with one target per point")
        groups = np.arange(self._next_group, self._next_group + n)
        self._append(points, targets, noises, groups)
        self._next_group += n
        self._reindex()
        self._refactorize(self._invalidate(map(tuple, self.cell_of(points))))
        return n

    def _append(self, points, targets, noises, groups):
        self._positions = np.vstack([self._positions, points])
        self._targets = np.concatenate([self._targets, targets])
        self._noises = np.concatenate([self._noises, noises])
        self._groups = np.concatenate([self._groups, np.asarray(groups, dtype=np.int64)])

    def _shift_groups(self, groups: np.ndarray, shifts: np.ndarray, noises: np.ndarray):
        """Translate every member of each group and set its noise."""
        order = np.argsort(groups)
        members = np.flatnonzero(np.isin(self._groups, groups))
        slot = order[np.searchsorted(groups[order], self._groups[members])]
        self._positions[members] += shifts[slot]
        self._noises[members] = noises[slot]
        return members

    # ========== Dynamic update ==========

    def dynamic_update(self, scan: ScanGp) -> UpdateStats:
        """
        Reconcile the map with one scan, then insert its surface.

        Every stored surface point inside the scan FOV is compared with the inferred
        inverse depth along its bearing: Δ = ‖x‖⁻¹ - r_IDP. Δ ≥ gσ deletes the point,
        |Δ| ≤ gσ fuses it and Δ < -gσ (occluded) leaves it unchanged. The decision on a
        surface point applies to its off-surface companions.

        Args:
            scan (ScanGp): Scan model of the new frame

        Returns:
            UpdateStats: Per-category counts
        """
        cfg = self.config
        counts = dict(deleted=0, fused=0, ignored=0, inserted=0, merged=0, out_of_view=0)
        touched: List[np.ndarray] = []
        fused_mask = np.zeros(self.size, dtype=bool)
        keep = np.ones(self.size, dtype=bool)

        surface = np.flatnonzero(self.surface_mask)
        if surface.size:
            local = scan.world_to_camera.apply(self._positions[surface])
            bearings, in_view = to_bearing_batch(local, scan.intrinsics)
            counts["out_of_view"] = int(np.count_nonzero(~in_view))
            idx = surface[in_view]
            if idx.size:
                r_stored = 1.0 / np.linalg.norm(local[in_view], axis=1)
                r_idp, sigma, _ = infer_batch(scan, bearings[in_view])
                delta = r_stored - r_idp
                gate = cfg.gate * sigma
                delete = delta >= gate
                fuse = ~delete & (np.abs(delta) <= gate)
                counts["deleted"] = int(delete.sum())
                counts["fused"] = int(fuse.sum())
                counts["ignored"] = int(idx.size - delete.sum() - fuse.sum())

                if delete.any():
                    dead = np.isin(self._groups, self._groups[idx[delete]])
                    touched.append(self._positions[dead])
                    keep &= ~dead

                if fuse.any():
                    f = idx[fuse]
                    r_s, r_i = r_stored[fuse], r_idp[fuse]
                    w_s = 1.0 / (self._noises[f] * r_s**4)
                    w_i = 1.0 / np.maximum(sigma[fuse] ** 2, 1e-18)
                    r_f = (w_s * r_s + w_i * r_i) / (w_s + w_i)
                    noise_f = np.maximum(cfg.fused_noise_floor, 1.0 / (w_s + w_i) / r_f**4)
                    new_world = scan.pose.apply(invert_batch(r_f, bearings[in_view][fuse]))
                    shifts = new_world - self._positions[f]
                    before = self._positions.copy()
                    members = self._shift_groups(self._groups[f], shifts, noise_f)
                    moved = members[np.any(before[members] != self._positions[members], axis=1)]
                    touched.extend([before[moved], self._positions[moved]])
                    fused_mask[f] = True

        if not keep.all():
            self._positions = self._positions[keep]
            self._targets = self._targets[keep]
            self._noises = self._noises[keep]
            self._groups = self._groups[keep]
            fused_mask = fused_mask[keep]

        merged, inserted = self._insert_scan(scan, fused_mask, touched)
        counts["merged"], counts["inserted"] = merged, inserted

        self._reindex()
        cells = self._invalidate(
            map(tuple, self.cell_of(np.vstack(touched))) if touched else []
        )
        stats = UpdateStats(**counts, touched_clusters=self._refactorize(cells))
        logger.info(
            f"🔄 GPIS update: {stats.deleted} deleted, {stats.fused} fused, "
            f"{stats.ignored} ignored, {stats.inserted} inserted, {stats.merged} merged "
            f"({self.size} points)"
        )
        return stats

    def _insert_scan(
        self, scan: ScanGp, fused_mask: np.ndarray, touched: List[np.ndarray]
    ) -> Tuple[int, int]:
        """Merge duplicates into existing surface points and insert the rest."""
        cfg = self.config
        samples = surface_samples(scan)
        points = samples.points[samples.points[:, 2] >= cfg.min_insert_height]
        if points.shape[0] == 0:
            return 0, 0

        duplicate = np.zeros(points.shape[0], dtype=bool)
        merged = 0
        surface = np.flatnonzero(self.surface_mask)
        if surface.size:
            dist, nn = cKDTree(self._positions[surface]).query(
                points, distance_upper_bound=0.5 * cfg.voxel
            )
            duplicate = np.isfinite(dist)
            for k in np.flatnonzero(duplicate):
                target = surface[nn[k]]
                if fused_mask[target]:
                    continue
                w_old = 1.0 / self._noises[target]
                w_new = 1.0 / cfg.fresh_noise
                new_pos = (w_old * self._positions[target] + w_new * points[k]) / (w_old + w_new)
                noise = max(cfg.fused_noise_floor, 1.0 / (w_old + w_new))
                before = self._positions.copy()
                members = self._shift_groups(
                    self._groups[[target]],
                    (new_pos - self._positions[target]).reshape(1, 3),
                    np.array([noise]),
                )
                touched.extend([before[members], self._positions[members]])
                fused_mask[target] = True
                merged += 1

        fresh = points[~duplicate]
        n = fresh.shape[0]
        if n:
            eps = cfg.effective_offset
            toward_sensor = scan.pose.translation - fresh
            toward_sensor /= np.linalg.norm(toward_sensor, axis=1, keepdims=True)
            groups = np.arange(self._next_group, self._next_group + n)
            self._next_group += n
            self._append(
                np.vstack([fresh, fresh + eps * toward_sensor, fresh - eps * toward_sensor]),
                np.concatenate([np.zeros(n), np.full(n, eps), np.full(n, -eps)]),
                np.full(3 * n, cfg.fresh_noise),
                np.concatenate([groups, groups, groups]),
            )
            touched.append(fresh)
        return merged, n

    # ========== Queries ==========

    def _group_by_cell(self, points: np.ndarray):
        keys, inverse = np.unique(self.cell_of(points), axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        for k, key in enumerate(keys):
            yield tuple(int(c) for c in key), np.flatnonzero(inverse == k)

    def query_batch(
        self, points: np.ndarray, with_normals: bool = True
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """
        Signed distance, variance and normal at each point.

        Args:
            points (np.ndarray): (n, 3) world points
            with_normals (bool): Skip gradient evaluation when False

        Returns:
            tuple: (mean (n,), variance (n,), normals (n, 3), prior (n,) bool).
            Prior-flagged rows have NaN mean and normal and variance k(0); normals with
            vanishing gradient are NaN.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = points.shape[0]
        mean = np.full(n, np.nan)
        variance = np.full(n, self.kernel.prior_variance)
        normals = np.full((n, 3), np.nan)
        prior = np.ones(n, dtype=bool)
        if n == 0 or self.size == 0:
            return mean, variance, normals, prior

        for cell, rows in self._group_by_cell(points):
            model = self._model_for(cell)
            if model is None:
                continue
            mean[rows], variance[rows] = predict_batch(model, points[rows])
            prior[rows] = False
            if with_normals:
                grad = mean_gradient_batch(model, points[rows])
                norm = np.linalg.norm(grad, axis=1)
                ok = norm >= NORMAL_EPS
                normals[rows[ok]] = grad[ok] / norm[ok, None]
        return mean, variance, normals, prior

    def predict_mean(self, points: np.ndarray) -> np.ndarray:
        """Signed distance only; NaN where the neighbourhood is empty."""
        points = np.atleast_2d(points)
        mean = np.full(points.shape[0], np.nan)
        if self.size == 0:
            return mean
        for cell, rows in self._group_by_cell(points):
            model = self._model_for(cell)
            if model is not None:
                mean[rows] = predict_mean_batch(model, points[rows])
        return mean

    def variance_gradient(self, points: np.ndarray) -> np.ndarray:
        """∇σ² at each point; zero where the neighbourhood is empty."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        grad = np.zeros_like(points)
        if self.size == 0:
            return grad
        for cell, rows in self._group_by_cell(points):
            model = self._model_for(cell)
            if model is not None:
                grad[rows] = var_gradient_batch(model, points[rows])
        return grad

    def query(self, point: np.ndarray) -> GpisQuery:
        """Single-point query; see ``query_batch``."""
        mean, variance, normals, prior = self.query_batch(np.asarray(point).reshape(1, 3))
        normal = normals[0] if np.all(np.isfinite(normals[0])) else None
        return GpisQuery(float(mean[0]), float(variance[0]), normal, bool(prior[0]))

    # ========== Surface extraction ==========

    def extract_mesh(
        self,
        bounds_min: Sequence[float],
        bounds_max: Sequence[float],
        voxel: Optional[float] = None,
    ) -> TriangleMesh:
        """
        Zero level set of the mean over a voxel grid.

        Grid nodes farther than the support radius from every training point are
        unknown; cubes touching an unknown node produce no geometry. The grid never
        extends below the configured floor height.

        Args:
            bounds_min (Sequence[float]): Lower grid corner (meters)
            bounds_max (Sequence[float]): Upper grid corner (meters)
            voxel (float, optional): Grid spacing, defaults to the configured voxel

        Returns:
            TriangleMesh: Vertices in grid traversal order with interpolated σ²

        Raises:
            DomainError: If voxel is not positive or the bounds are not finite
        """
        if voxel is None:
            voxel = self.config.voxel
        lo = np.array(bounds_min, dtype=float)
        hi = np.array(bounds_max, dtype=float)
        if voxel <= 0 or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise DomainError("extract_mesh needs a positive voxel and finite bounds")
        if self.config.floor_height is not None:
            lo[2] = max(lo[2], self.config.floor_height)
        if self.size == 0 or lo[2] >= hi[2]:
            return TriangleMesh()

        axes = [np.arange(lo[a], hi[a] + 0.5 * voxel, voxel) for a in range(3)]
        shape = tuple(ax.size for ax in axes)
        if min(shape) < 2:
            return TriangleMesh()
        nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)

        dist, _ = cKDTree(self._positions).query(
            nodes, distance_upper_bound=self.config.effective_support
        )
        known = np.isfinite(dist)
        values = np.full(nodes.shape[0], np.nan)
        values[known] = self.predict_mean(nodes[known])
        known &= np.isfinite(values)
        if not known.any():
            return TriangleMesh()
        if values[known].min() >= 0.0 or values[known].max() <= 0.0:
            return TriangleMesh()

        fill = float(np.abs(values[known]).max()) + voxel
        volume = np.where(known, values, fill).reshape(shape)
        known = known.reshape(shape)

        cube_known = np.ones(tuple(s - 1 for s in shape), dtype=bool)
        for dx, dy, dz in itertools.product((0, 1), repeat=3):
            cube_known &= known[dx:shape[0] - 1 + dx, dy:shape[1] - 1 + dy, dz:shape[2] - 1 + dz]
        mask = np.zeros(shape, dtype=bool)
        mask[:-1, :-1, :-1] = cube_known

        try:
            verts, faces, _, _ = measure.marching_cubes(
                volume,
                level=0.0,
                spacing=(voxel, voxel, voxel),
                gradient_direction="ascent",
                method="lorensen",
                mask=mask,
            )
        except (RuntimeError, ValueError):
            return TriangleMesh()

        grid = verts / voxel
        centroid = np.floor(grid[faces].mean(axis=1)).astype(int)
        centroid = np.clip(centroid, 0, np.array(cube_known.shape) - 1)
        faces = faces[cube_known[centroid[:, 0], centroid[:, 1], centroid[:, 2]]]
        if faces.shape[0] == 0:
            return TriangleMesh()
        used, faces = np.unique(faces.reshape(-1), return_inverse=True)
        faces = faces.reshape(-1, 3)
        grid = grid[used]
        vertices = grid * voxel + lo

        variances = self._vertex_variances(nodes, volume, cube_known, grid, shape)
        logger.debug(f"Mesh: {vertices.shape[0]} vertices, {faces.shape[0]} faces")
        return TriangleMesh(vertices, faces.astype(np.int64), variances)

    def _vertex_variances(self, nodes, volume, cube_known, grid, shape) -> np.ndarray:
        """σ² at the corners of zero-crossing cubes, interpolated to vertices."""
        sign = volume < 0.0
        any_neg = np.zeros_like(cube_known)
        any_pos = np.zeros_like(cube_known)
        for dx, dy, dz in itertools.product((0, 1), repeat=3):
            corner = sign[dx:shape[0] - 1 + dx, dy:shape[1] - 1 + dy, dz:shape[2] - 1 + dz]
            any_neg |= corner
            any_pos |= ~corner
        crossing = cube_known & any_neg & any_pos

        active = np.zeros(shape, dtype=bool)
        for dx, dy, dz in itertools.product((0, 1), repeat=3):
            active[dx:shape[0] - 1 + dx, dy:shape[1] - 1 + dy, dz:shape[2] - 1 + dz] |= crossing
        active = active.reshape(-1)

        var_grid = np.full(nodes.shape[0], self.kernel.prior_variance)
        _, active_var, _, _ = self.query_batch(nodes[active], with_normals=False)
        var_grid[active] = active_var
        return map_coordinates(var_grid.reshape(shape), grid.T, order=1, mode="nearest")


# ========== Module-level operations ==========

def dynamic_update(gpis_map: GpisMap, scan: ScanGp) -> UpdateStats:
    """Delete / fuse / ignore stored points against ``scan`` and insert its surface."""
    return gpis_map.dynamic_update(scan)


def query(gpis_map: GpisMap, point: np.ndarray) -> GpisQuery:
    return gpis_map.query(point)


def extract_mesh(
    gpis_map: GpisMap,
    bounds: Tuple[Sequence[float], Sequence[float]],
    voxel: Optional[float] = None,
) -> TriangleMesh:
    return gpis_map.extract_mesh(bounds[0], bounds[1], voxel)


# ========== Snapshots ==========

def save_snapshot(gpis_map: GpisMap, path: Union[str, Path]) -> None:
    """
    Write the map as a versioned text snapshot.

    Layout: magic line, ``length_scale``, ``cell_size``, ``clusters <n>``, then per
    cluster ``cluster i j k count`` followed by ``x y z target noise group`` lines.
    """
    lines = [
        SNAPSHOT_MAGIC,
        f"length_scale {gpis_map.config.length_scale!r}",
        f"cell_size {gpis_map.cell_size!r}",
        f"clusters {len(gpis_map._clusters)}",
    ]
    for cell in sorted(gpis_map.clusters):
        samples = gpis_map.cluster_samples(cell)
        lines.append(f"cluster {cell[0]} {cell[1]} {cell[2]} {len(samples)}")
        for sample in samples:
            x, y, z = (float(v) for v in sample.position)
            lines.append(
                f"{x!r} {y!r} {z!r} {sample.target!r} {sample.noise!r} {sample.group}"
            )
    Path(path).write_text("\n".join(lines) + "\n")
    logger.info(f"✅ Saved GPIS snapshot with {gpis_map.size} points to {path}")


def load_snapshot(path: Union[str, Path], config: Optional[GpisConfig] = None) -> GpisMap:
    """
    Read a snapshot written by ``save_snapshot``.

    Args:
        path (str | Path): Snapshot file
        config (GpisConfig, optional): Settings; kernel length and cell size are
            taken from the file

    Returns:
        GpisMap: Restored map

    Raises:
        SnapshotFormatError: On any layout violation
    """
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        if not lines or lines[0] != SNAPSHOT_MAGIC:
            raise SnapshotFormatError(f"{path}: missing '{SNAPSHOT_MAGIC}' header")
        length_scale = _header_value(lines[1], "length_scale")
        cell_size = _header_value(lines[2], "cell_size")
        n_clusters = int(_header_value(lines[3], "clusters"))
        config = (config or GpisConfig()).model_copy(
            update={"length_scale": length_scale, "cell_size": cell_size}
        )
        gpis_map = GpisMap(config)

        rows: List[List[float]] = []
        cursor = 4
        for _ in range(n_clusters):
            head = lines[cursor].split()
            if len(head) != 5 or head[0] != "cluster":
                raise SnapshotFormatError(f"{path}: bad cluster line '{lines[cursor]}'")
            count = int(head[4])
            for line in lines[cursor + 1:cursor + 1 + count]:
                fields = line.split()
                if len(fields) != 6:
                    raise SnapshotFormatError(f"{path}: bad point line '{line}'")
                rows.append([float(v) for v in fields])
            if len(lines) < cursor + 1 + count:
                raise SnapshotFormatError(f"{path}: truncated cluster")
            cursor += 1 + count
        if cursor != len(lines):
            raise SnapshotFormatError(f"{path}: trailing content after {n_clusters} clusters")
    except (IndexError, ValueError) as e:
        raise SnapshotFormatError(f"{path}: {e}") from e

    if rows:
        data = np.asarray(rows)
        gpis_map._append(data[:, :3], data[:, 3], data[:, 4], data[:, 5].astype(np.int64))
        gpis_map._next_group = int(data[:, 5].max()) + 1
        gpis_map._reindex()
    logger.info(f"✅ Loaded GPIS snapshot with {gpis_map.size} points from {path}")
    return gpis_map


def _header_value(line: str, key: str) -> float:
    parts = line.split()
    if len(parts) != 2 or parts[0] != key:
        raise SnapshotFormatError(f"expected '{key} <value>', got '{line}'")
    return float(parts[1])
