"""
export-mesh: mesh a saved GPIS snapshot into an ASCII PLY.
"""

import argparse
import logging

import numpy as np

from backend.cli.common import positive_float
from backend.models.gpis import TriangleMesh
from backend.services.export_service import write_ply
from backend.services.gpis_service import load_snapshot

logger = logging.getLogger(__name__)


def add_parser(subparsers):
    parser = subparsers.add_parser("export-mesh", help="Mesh a GPIS snapshot to PLY")
    parser.add_argument("snapshot", help="Snapshot written by save_snapshot")
    parser.add_argument("--voxel", type=positive_float, default=None, help="Grid spacing (meters)")
    parser.add_argument(
        "--bounds",
        type=float,
        nargs=6,
        metavar=("XMIN", "YMIN", "ZMIN", "XMAX", "YMAX", "ZMAX"),
        default=None,
        help="Grid bounds (default: training points padded by the support radius)",
    )
    parser.add_argument("--out", default="mesh.ply", help="Output PLY path")
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    gpis_map = load_snapshot(args.snapshot)
    voxel = gpis_map.config.voxel if args.voxel is None else args.voxel
    if gpis_map.size == 0:
        mesh = TriangleMesh()
    else:
        if args.bounds is not None:
            lo, hi = np.asarray(args.bounds[:3]), np.asarray(args.bounds[3:])
        else:
            pad = gpis_map.config.effective_support + voxel
            lo = gpis_map.positions.min(axis=0) - pad
            hi = gpis_map.positions.max(axis=0) + pad
        mesh = gpis_map.extract_mesh(lo, hi, voxel)
    write_ply(mesh, args.out)
    return 0
