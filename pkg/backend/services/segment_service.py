"""
Segment Service.

Projects the mapped pile onto the ground, walks its outer contour into candidate
segments, and computes the per-segment attributes that come straight from the map:
real/imaginary classification, SDSD frontier score, height and travel distance. It
also keeps the ground-visibility evidence that decides whether a standoff footprint
may stand on unobserved ground.
"""

import heapq
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from skimage import measure

from backend.models.camera import DepthImage
from backend.models.gpis import TriangleMesh
from backend.models.planning import PlannerConfig, Segment
from backend.services.gpis_service import GpisMap
from backend.utils.exceptions import NoCandidatesError
from backend.utils.geometry import RigidTransform

logger = logging.getLogger(__name__)

CLOSING_ITERATIONS = 2
NEIGHBOURS_8 = tuple(
    (di, dj, math.hypot(di, dj))
    for di in (-1, 0, 1)
    for dj in (-1, 0, 1)
    if (di, dj) != (0, 0)
)


# ========== Ground projection ==========

def _footprint(
    xy: np.ndarray, origin: np.ndarray, shape: Tuple[int, int], res: float
) -> np.ndarray:
    """Occupied raster of projected points, gaps closed and holes filled."""
    occupied = np.zeros(shape, dtype=bool)
    cells = np.floor((xy - origin) / res).astype(int)
    inside = np.all((cells >= 0) & (cells < np.array(shape)), axis=1)
    occupied[cells[inside, 0], cells[inside, 1]] = True
    closed = ndimage.binary_closing(occupied, iterations=CLOSING_ITERATIONS)
    return ndimage.binary_fill_holes(closed | occupied)


def _pile_vertices(mesh: TriangleMesh, clearance: float) -> np.ndarray:
    return mesh.vertices[mesh.vertices[:, 2] > clearance]


@dataclass(frozen=True)
class GroundRaster:
    """
    Travel raster: pile footprint inflated by the robot radius.

    Attributes:
        origin (np.ndarray): World (x, y) of cell (0, 0)'s lower corner
        resolution (float): Cell size (meters)
        occupied (np.ndarray): Pile footprint cells
        blocked (np.ndarray): Cells the robot center may not enter
    """

    origin: np.ndarray
    resolution: float
    occupied: np.ndarray
    blocked: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.blocked.shape

    def cell(self, xy: Sequence[float]) -> Optional[Tuple[int, int]]:
        """Cell containing a world point, or None outside the raster."""
        i, j = (int(v) for v in np.floor((np.asarray(xy[:2]) - self.origin) / self.resolution))
        if 0 <= i < self.shape[0] and 0 <= j < self.shape[1]:
            return i, j
        return None


def build_ground_raster(
    mesh: TriangleMesh,
    lo: Sequence[float],
    hi: Sequence[float],
    config: PlannerConfig,
    surface: Optional[np.ndarray] = None,
) -> GroundRaster:
    """
    Rasterize the pile footprint over [lo, hi] and inflate it.

    Args:
        mesh (TriangleMesh): Current map surface
        lo (Sequence[float]): Lower (x, y) corner (meters)
        hi (Sequence[float]): Upper (x, y) corner (meters)
        config (PlannerConfig): Clearance, robot radius and travel resolution
        surface (np.ndarray, optional): (n, 3) observed surface samples that occupy
            the footprint even where the mesh has no geometry

    Returns:
        GroundRaster: Occupancy and inflated blocking masks
    """
    res = config.travel_resolution
    origin = np.asarray(lo[:2], dtype=float)
    shape = tuple(int(v) for v in np.ceil((np.asarray(hi[:2]) - origin) / res).clip(min=1))
    points = _pile_vertices(mesh, config.ground_clearance)
    if surface is not None and surface.size:
        points = np.vstack([points, surface[surface[:, 2] > config.ground_clearance]])
    occupied = _footprint(points[:, :2], origin, shape, res)
    if occupied.any():
        clearance = ndimage.distance_transform_edt(~occupied) * res
        blocked = clearance <= config.robot_radius
    else:
        blocked = occupied.copy()
    return GroundRaster(origin, res, occupied, blocked)


def distance_field(raster: GroundRaster, start_xy: Sequence[float]) -> np.ndarray:
    """
    Single-source 8-connected Dijkstra over free cells.

    The start cell is always expanded, even when blocked, so a robot standing close to
    the pile can still leave.

    Returns:
        np.ndarray: Path length (meters) per cell; inf where unreachable
    """
    dist = np.full(raster.shape, np.inf)
    start = raster.cell(start_xy)
    if start is None:
        return dist
    rows, cols = raster.shape
    res = raster.resolution
    dist[start] = 0.0
    queue = [(0.0, start)]
    while queue:
        d, (i, j) = heapq.heappop(queue)
        if d > dist[i, j]:
            continue
        for di, dj, step in NEIGHBOURS_8:
            ni, nj = i + di, j + dj
            if 0 <= ni < rows and 0 <= nj < cols and not raster.blocked[ni, nj]:
                nd = d + step * res
                if nd < dist[ni, nj]:
                    dist[ni, nj] = nd
                    heapq.heappush(queue, (nd, (ni, nj)))
    return dist


def travel_distance(
    start_xy: Sequence[float],
    seg: Segment,
    raster: GroundRaster,
    field: Optional[np.ndarray] = None,
) -> float:
    """
    Grid path length from the robot to the segment's standoff point.

    Args:
        start_xy (Sequence[float]): Current robot (x, y)
        seg (Segment): Candidate segment
        raster (GroundRaster): Travel raster
        field (np.ndarray, optional): Precomputed ``distance_field`` from start_xy

    Returns:
        float: Meters, inf when unreachable
    """
    if field is None:
        field = distance_field(raster, start_xy)
    x, y, _ = seg.standoff_pose
    cell = raster.cell((x, y))
    return float(field[cell]) if cell is not None else math.inf


# ========== Ground visibility ==========

UNSEEN, FREE, HIDDEN = 0, 1, 2


@dataclass
class GroundEvidence:
    """
    What the scans have shown of the ground plane.

    Every cell starts unseen. A depth frame marks a cell free where it sees the ground
    inside it, and hidden where something stands in front of that ground. Free is
    final because objects only ever leave the scene.

    Attributes:
        origin (np.ndarray): World (x, y) of cell (0, 0)'s lower corner
        resolution (float): Cell size (meters)
        state (np.ndarray): (rows, cols) UNSEEN / FREE / HIDDEN per cell
        height (float): World height of the ground plane (meters)
    """

    origin: np.ndarray
    resolution: float
    state: np.ndarray
    height: float = 0.0

    @classmethod
    def empty(
        cls, lo: Sequence[float], hi: Sequence[float], resolution: float, height: float = 0.0
    ) -> "GroundEvidence":
        origin = np.asarray(lo, dtype=float)[:2]
        extent = np.asarray(hi, dtype=float)[:2] - origin
        shape = tuple(int(v) for v in np.maximum(np.ceil(extent / resolution), 1))
        return cls(origin, resolution, np.full(shape, UNSEEN, dtype=np.int8), height)

    @property
    def centers(self) -> np.ndarray:
        """(rows * cols, 2) cell centers in row-major order."""
        rows, cols = self.state.shape
        ii, jj = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
        cells = np.column_stack([ii.reshape(-1), jj.reshape(-1)])
        return self.origin + (cells + 0.5) * self.resolution

    def observe(
        self, image: DepthImage, pose: RigidTransform, tolerance: float
    ) -> Tuple[int, int]:
        """
        Fold one depth frame in.

        Every pixel ray that meets the ground within range votes for the cell it meets
        it in: free when the measured depth agrees with the ground, hidden when a
        return came back at least ``tolerance`` in front of it.

        Args:
            image (DepthImage): Depth frame
            pose (RigidTransform): Camera-to-world transform of the frame
            tolerance (float): Depth agreement band (meters)

        Returns:
            tuple: (pixels voting free, pixels voting hidden)
        """
        bearings = image.intrinsics.pixel_bearings().reshape(-1, 2)
        directions = np.column_stack([bearings, np.ones(bearings.shape[0])]) @ pose.rotation.T
        origin = pose.translation
        ground_depth = np.full(bearings.shape[0], np.inf)
        down = directions[:, 2] < 0.0
        ground_depth[down] = (self.height - origin[2]) / directions[down, 2]
        rays = np.flatnonzero(
            (ground_depth > 0.0) & (ground_depth < image.intrinsics.max_range)
        )
        if rays.size == 0:
            return 0, 0

        hits = origin + ground_depth[rays, None] * directions[rays]
        cells = np.floor((hits[:, :2] - self.origin) / self.resolution).astype(int)
        inside = np.all((cells >= 0) & (cells < np.array(self.state.shape)), axis=1)
        measured = image.depths.reshape(-1)[rays]
        expected = ground_depth[rays]
        returned = inside & np.isfinite(measured)
        visible = returned & (np.abs(measured - expected) <= tolerance)
        occluded = returned & (measured < expected - tolerance)

        self.state[cells[visible, 0], cells[visible, 1]] = FREE
        hidden = cells[occluded]
        hidden = hidden[self.state[hidden[:, 0], hidden[:, 1]] != FREE]
        self.state[hidden[:, 0], hidden[:, 1]] = HIDDEN
        return int(visible.sum()), int(occluded.sum())

    def footprint_clear(self, xy: Sequence[float], radius: float) -> bool:
        """False when a disc of ``radius`` at ``xy`` covers any hidden cell."""
        offset = self.centers - np.asarray(xy[:2], dtype=float)
        inside = np.einsum("ij,ij->i", offset, offset) <= radius**2
        return not np.any(self.state.reshape(-1)[inside] == HIDDEN)


# ========== Segment extraction ==========

def _signed_area(polygon: np.ndarray) -> float:
    x, y = polygon[:, 0], polygon[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _resample_closed(polygon: np.ndarray, count: int) -> np.ndarray:
    """``count`` + 1 points at equal arc length along a closed polygon (last = first)."""
    closed = np.vstack([polygon, polygon[:1]])
    lengths = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(lengths)])
    targets = np.linspace(0.0, arc[-1], count + 1)
    points = np.column_stack(
        [np.interp(targets, arc, closed[:, 0]), np.interp(targets, arc, closed[:, 1])]
    )
    points[-1] = points[0]
    return points


def outer_contour(mesh: TriangleMesh, config: PlannerConfig) -> np.ndarray:
    """
    Counter-clockwise outer contour of the pile's ground projection.

    Raises:
        NoCandidatesError: If fewer than 3 raster cells are occupied
    """
    res = config.ground_resolution
    xy = _pile_vertices(mesh, config.ground_clearance)[:, :2]
    if xy.shape[0] == 0:
        raise NoCandidatesError("Mesh has no vertices above ground clearance")
    margin = (CLOSING_ITERATIONS + 2) * res
    origin = xy.min(axis=0) - margin
    shape = tuple(int(v) for v in np.ceil((xy.max(axis=0) + margin - origin) / res))
    footprint = _footprint(xy, origin, shape, res)
    if np.count_nonzero(footprint) < 3:
        raise NoCandidatesError(f"Ground projection covers {np.count_nonzero(footprint)} cells")

    contours = measure.find_contours(np.pad(footprint.astype(float), 1), 0.5)
    contour = max(contours, key=len) - 1.0
    polygon = measure.approximate_polygon(contour, tolerance=0.5)[:-1]
    if polygon.shape[0] < 3:
        raise NoCandidatesError("Ground contour degenerates to fewer than 3 vertices")
    polygon = origin + (polygon + 0.5) * res
    if _signed_area(polygon) < 0:
        polygon = polygon[::-1]
    return polygon


def extract_segments(mesh: TriangleMesh, config: PlannerConfig) -> List[Segment]:
    """
    Split the pile contour into candidate segments of about the target length.

    Each segment keeps the mesh vertices in its slab plus a probe curtain on its
    vertical plane as its surface points P_i.

    Args:
        mesh (TriangleMesh): Current map surface
        config (PlannerConfig): Raster and segment settings

    Returns:
        list: Segments in counter-clockwise chain order

    Raises:
        NoCandidatesError: On a degenerate ground projection
    """
    polygon = outer_contour(mesh, config)
    closed = np.vstack([polygon, polygon[:1]])
    perimeter = float(np.sum(np.linalg.norm(np.diff(closed, axis=0), axis=1)))
    count = max(3, int(round(perimeter / config.segment_length)))
    chain = _resample_closed(polygon, count)

    vertices = _pile_vertices(mesh, config.ground_clearance)

    segments = []
    for k in range(count):
        start, end = chain[k], chain[k + 1]
        delta = end - start
        if np.linalg.norm(delta) < 1e-9:
            continue
        direction = delta / np.linalg.norm(delta)
        seg = Segment(
            index=len(segments),
            start=start.copy(),
            end=end.copy(),
            outward=np.array([direction[1], -direction[0]]),
            standoff_distance=config.standoff,
        )
        seg.surface_points = _surface_points(seg, vertices, config)
        segments.append(seg)

    logger.debug(f"Contour perimeter {perimeter:.2f} m → {len(segments)} segments")
    return segments


def _surface_points(seg: Segment, vertices: np.ndarray, config: PlannerConfig) -> np.ndarray:
    """Mesh vertices in the slab above the segment plus a vertical curtain up to their top."""
    rel = vertices[:, :2] - seg.start
    along = rel @ seg.direction
    across = rel @ seg.outward
    in_slab = (along >= 0) & (along <= seg.length) & (np.abs(across) <= config.slab_width)
    slab = vertices[in_slab]

    top = float(slab[:, 2].max()) if slab.size else config.ground_clearance
    ts = np.arange(0.5 * config.probe_spacing, seg.length, config.probe_spacing)
    if ts.size == 0:
        ts = np.array([0.5 * seg.length])
    zs = np.arange(config.ground_clearance, top + 1e-9, config.probe_spacing)
    if zs.size == 0:
        zs = np.array([top])
    tt, zz = np.meshgrid(ts, zs, indexing="ij")
    xy = seg.start + tt.reshape(-1, 1) * seg.direction
    curtain = np.column_stack([xy, zz.reshape(-1)])
    return np.vstack([slab, curtain])


# ========== Map attributes ==========

def classify_segment(seg: Segment, gpis_map: GpisMap, config: PlannerConfig) -> bool:
    """
    Real when the aggregated GPIS variance over P_i is below the threshold.

    Imaginary segments get m = h = σ² = 0. Sets ``seg.is_real`` and ``seg.sigma2``.

    Returns:
        bool: True for a real segment
    """
    if seg.surface_points.shape[0] == 0:
        seg.is_real = False
    else:
        _, variance, _, _ = gpis_map.query_batch(seg.surface_points, with_normals=False)
        aggregate = variance.max() if config.variance_aggregate == "max" else variance.mean()
        seg.sigma2 = float(aggregate)
        seg.is_real = bool(aggregate < config.variance_threshold)
    if not seg.is_real:
        seg.m = seg.h = seg.sigma2 = 0.0
    return seg.is_real


def frontier_score(seg: Segment, gpis_map: GpisMap) -> float:
    """
    SDSD: Σ over P_i of (∇σ²(x) · l_i)².

    Returns:
        float: Non-negative frontier score
    """
    if seg.surface_points.shape[0] == 0:
        return 0.0
    grad = gpis_map.variance_gradient(seg.surface_points)
    return float(np.sum((grad @ seg.direction3) ** 2))


def height(seg: Segment) -> float:
    """Highest z over P_i; 0 when empty."""
    if seg.surface_points.shape[0] == 0:
        return 0.0
    return max(0.0, float(seg.surface_points[:, 2].max()))
