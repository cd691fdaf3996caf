"""Triangle-mesh reconstruction from 3D Gaussian scenes.

Renders Gaussian scenes by closed-form ray-Gaussian intersection, evaluates
the view-minimum accumulated opacity of arbitrary 3D points, and extracts
level-set meshes on a Gaussian-induced tetrahedral grid with binary-search
refined marching tetrahedra. A torch-based optimizer fits scenes with depth
distortion and normal consistency regularizers.
"""

from .config import FitConfig, SceneConfig
from .scene import CameraView, GaussianScene, look_at_camera
from .core import Intersection, RayLocal, contribution, intersect, plane_normal, to_local
from .render import RaySample, RenderBuffers, depth_to_normal, gather_along_ray, \
    gather_ray, render_view
from .field import FieldQuery, batch_evaluate, field_opacity, partial_opacity, ray_opacity
from .delaunay import CoplanarPointsError, delaunay
from .tetra import TetrahedralGrid, TriangleMesh, binary_search_refine, extract_mesh, \
    filter_cells, generate_vertices, marching_tetrahedra
from .io import load_cameras, load_gaussians, save_gaussians, save_mesh
from .optimize import DensifyStats, FitDivergenceError, accumulate_densify, \
    densify_step, fit

__version__ = "0.1.0"
