"""File formats: Gaussian scenes (3DGS PLY convention), cameras, meshes, images.

Gaussian PLY files store raw (pre-activation) parameters as float32:
scale = log(activated scale), opacity = logit(activated alpha), quaternions
unnormalized, SH rest coefficients channel-major (f_rest_0..14 = channel 0).
Loading applies the activations; saving inverts them, so load(save(scene))
round-trips within float32 precision.
"""

import json
import struct
import warnings
from pathlib import Path
from typing import List, Optional

import numpy as np

from .scene import CameraView, GaussianScene, SH_COEFFS, logit, quat_normalize, sigmoid

_GAUSSIAN_PROPS = (
    ["x", "y", "z"]
    + [f"f_dc_{i}" for i in range(3)]
    + [f"f_rest_{i}" for i in range(45)]
    + ["opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
)
_OPTIONAL_PROPS = {"nx", "ny", "nz"}
_REST_PER_CHANNEL = 15


class PlyFormatError(ValueError):
    pass


def _parse_ply_header(fh):
    magic = fh.readline().strip()
    if magic != b"ply":
        raise PlyFormatError("not a PLY file (missing 'ply' magic)")
    fmt = None
    elements = []       # (name, count, [(prop_name, type_char)])
    while True:
        line = fh.readline()
        if not line:
            raise PlyFormatError("unexpected EOF in header")
        tokens = line.decode("ascii", "replace").strip().split()
        if not tokens:
            continue
        if tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append((tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property":
            if not elements:
                raise PlyFormatError("property before element")
            if tokens[1] == "list":
                elements[-1][2].append((tokens[-1], ("list", tokens[2], tokens[3])))
            else:
                elements[-1][2].append((tokens[-1], tokens[1]))
        elif tokens[0] == "end_header":
            break
    if fmt != "binary_little_endian":
        raise PlyFormatError(f"unsupported PLY format '{fmt}'; "
                             "need binary_little_endian")
    return elements


_PLY_DTYPES = {"float": "<f4", "float32": "<f4", "double": "<f8",
               "float64": "<f8", "int": "<i4", "int32": "<i4",
               "uint": "<u4", "uint32": "<u4", "uchar": "u1", "uint8": "u1",
               "short": "<i2", "ushort": "<u2"}


def load_gaussians(path) -> GaussianScene:
    """Load and activate a Gaussian scene from a 3DGS-convention PLY file.

    Files with fewer f_rest properties (lower SH degree) are padded with
    zeros. Raises PlyFormatError naming the first missing property, and
    ValueError naming the first record with non-finite values.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        elements = _parse_ply_header(fh)
        vertex = next((e for e in elements if e[0] == "vertex"), None)
        if vertex is None:
            raise PlyFormatError("PLY has no 'vertex' element")
        _, count, props = vertex
        names = [p[0] for p in props]
        has_rest = [n for n in names if n.startswith("f_rest_")]
        required = [p for p in _GAUSSIAN_PROPS if not p.startswith("f_rest_")]
        for prop in required:
            if prop not in names:
                raise PlyFormatError(f"missing vertex property '{prop}'")
        n_rest = len(has_rest)
        if n_rest % 3 != 0:
            raise PlyFormatError(f"f_rest count {n_rest} not divisible by 3")
        for name, typ in props:
            if isinstance(typ, tuple) or _PLY_DTYPES.get(typ) != "<f4":
                if name in _GAUSSIAN_PROPS or name in _OPTIONAL_PROPS:
                    raise PlyFormatError(f"property '{name}' must be float32")
        dtype = np.dtype([(n, _PLY_DTYPES[t]) for n, t in props])
        data = np.frombuffer(fh.read(count * dtype.itemsize), dtype=dtype,
                             count=count)

    def col(name):
        return data[name].astype(np.float64)

    centers = np.stack([col("x"), col("y"), col("z")], axis=1)
    raw_scales = np.stack([col(f"scale_{i}") for i in range(3)], axis=1)
    raw_quats = np.stack([col(f"rot_{i}") for i in range(4)], axis=1)
    raw_opac = col("opacity")
    rest_pc = n_rest // 3
    sh = np.zeros((count, SH_COEFFS, 3))
    for ch in range(3):
        sh[:, 0, ch] = col(f"f_dc_{ch}")
        for k in range(rest_pc):
            sh[:, 1 + k, ch] = col(f"f_rest_{ch * rest_pc + k}")

    stacked = np.concatenate([centers, raw_scales, raw_quats,
                              raw_opac[:, None], sh.reshape(count, -1)], axis=1)
    bad = ~np.isfinite(stacked).all(axis=1)
    if bad.any():
        raise ValueError(f"non-finite Gaussian parameters at record "
                         f"{int(np.nonzero(bad)[0][0])}")

    return GaussianScene(centers=centers,
                         scales=np.exp(raw_scales),
                         rotations=quat_normalize(raw_quats),
                         opacities=sigmoid(raw_opac),
                         sh=sh)


def save_gaussians(scene: GaussianScene, path) -> None:
    """Write a Gaussian scene as a 3DGS-convention binary PLY.

    Inverse activations are applied (log scale, logit alpha); alphas at
    exactly 0 or 1 are clamped into [1e-6, 1 - 1e-6] with a warning.
    """
    path = Path(path)
    n = len(scene)
    alphas = scene.opacities
    if np.any(alphas <= 0.0) or np.any(alphas >= 1.0):
        warnings.warn("alphas at 0 or 1 clamped before logit")
        alphas = np.clip(alphas, 1e-6, 1.0 - 1e-6)
    rec = np.empty(n, dtype=np.dtype([(p, "<f4") for p in _GAUSSIAN_PROPS]))
    rec["x"], rec["y"], rec["z"] = scene.centers.T.astype(np.float32)
    for ch in range(3):
        rec[f"f_dc_{ch}"] = scene.sh[:, 0, ch].astype(np.float32)
        for k in range(_REST_PER_CHANNEL):
            rec[f"f_rest_{ch * _REST_PER_CHANNEL + k}"] = \
                scene.sh[:, 1 + k, ch].astype(np.float32)
    rec["opacity"] = logit(alphas).astype(np.float32)
    for i in range(3):
        rec[f"scale_{i}"] = np.log(scene.scales[:, i]).astype(np.float32)
    for i in range(4):
        rec[f"rot_{i}"] = scene.rotations[:, i].astype(np.float32)

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {p}" for p in _GAUSSIAN_PROPS]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(rec.tobytes())


def load_cameras(path, load_images: bool = True) -> List[CameraView]:
    """Load a camera set from the JSON camera format.

    The file holds a list (or {"cameras": [...]}) of records with keys
    id, width, height, fx, fy, cx, cy, rotation (9 floats row-major,
    world-to-camera), translation (3 floats) and an optional image path
    (relative to the camera file). Images are decoded to linear [0, 1] RGB.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    records = doc["cameras"] if isinstance(doc, dict) else doc
    views = []
    for rec in records:
        R = np.asarray(rec["rotation"], dtype=np.float64).reshape(3, 3)
        err = np.abs(R @ R.T - np.eye(3)).max()
        if err > 1e-4:
            raise ValueError(f"camera {rec.get('id')}: rotation not orthonormal "
                             f"(max deviation {err:.3e})")
        image = None
        if load_images and rec.get("image"):
            image = load_image(path.parent / rec["image"])
        views.append(CameraView(
            width=int(rec["width"]), height=int(rec["height"]),
            fx=float(rec["fx"]), fy=float(rec["fy"]),
            cx=float(rec["cx"]), cy=float(rec["cy"]),
            rotation=R,
            translation=np.asarray(rec["translation"], dtype=np.float64),
            image=image, view_id=int(rec.get("id", len(views)))))
    return views


def save_cameras(views: List[CameraView], path, image_paths=None) -> None:
    records = []
    for i, v in enumerate(views):
        rec = {"id": v.view_id, "width": v.width, "height": v.height,
               "fx": v.fx, "fy": v.fy, "cx": v.cx, "cy": v.cy,
               "rotation": [float(x) for x in v.rotation.ravel()],
               "translation": [float(x) for x in v.translation]}
        if image_paths and image_paths[i]:
            rec["image"] = str(image_paths[i])
        records.append(rec)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"cameras": records}, fh, indent=1)


# -- meshes -------------------------------------------------------------------

def _validate_mesh(vertices, triangles):
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if len(triangles):
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            raise ValueError("triangle index out of range")
        degen = (triangles[:, 0] == triangles[:, 1]) \
            | (triangles[:, 1] == triangles[:, 2]) \
            | (triangles[:, 0] == triangles[:, 2])
        if degen.any():
            raise ValueError(f"degenerate triangle (repeated index) at face "
                             f"{int(np.nonzero(degen)[0][0])}")
    return vertices, triangles


def save_mesh(mesh, path, fmt: Optional[str] = None) -> None:
    """Write a triangle mesh as OBJ (1-based indices) or binary PLY.

    ``mesh`` is anything with .vertices and .triangles arrays. The format
    defaults from the file suffix. Empty meshes produce a valid empty file
    with a warning.
    """
    path = Path(path)
    if fmt is None:
        fmt = "obj" if path.suffix.lower() == ".obj" else "ply"
    vertices, triangles = _validate_mesh(mesh.vertices, mesh.triangles)
    if len(triangles) == 0:
        warnings.warn(f"saving empty mesh to {path}")
    if fmt == "obj":
        with open(path, "w", encoding="utf-8") as fh:
            for v in vertices:
                fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
            for t in triangles:
                fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
    elif fmt in ("ply", "ply-binary"):
        header = ["ply", "format binary_little_endian 1.0",
                  f"element vertex {len(vertices)}",
                  "property float x", "property float y", "property float z",
                  f"element face {len(triangles)}",
                  "property list uchar int vertex_indices", "end_header"]
        with open(path, "wb") as fh:
            fh.write(("\n".join(header) + "\n").encode("ascii"))
            fh.write(vertices.astype("<f4").tobytes())
            face = np.empty(len(triangles),
                            dtype=np.dtype([("n", "u1"), ("idx", "<i4", (3,))]))
            face["n"] = 3
            face["idx"] = triangles.astype("<i4")
            fh.write(face.tobytes())
    else:
        raise ValueError(f"unknown mesh format '{fmt}'")


def load_mesh_ply(path):
    """Read back a binary PLY mesh; returns (vertices, triangles)."""
    with open(path, "rb") as fh:
        elements = _parse_ply_header(fh)
        arrays = {}
        for name, count, props in elements:
            if name == "vertex":
                dtype = np.dtype([(n, _PLY_DTYPES[t]) for n, t in props])
                data = np.frombuffer(fh.read(count * dtype.itemsize),
                                     dtype=dtype, count=count)
                arrays["vertices"] = np.stack([data["x"], data["y"], data["z"]],
                                              axis=1).astype(np.float64)
            elif name == "face":
                dtype = np.dtype([("n", "u1"), ("idx", "<i4", (3,))])
                data = np.frombuffer(fh.read(count * dtype.itemsize),
                                     dtype=dtype, count=count)
                if count and not (data["n"] == 3).all():
                    raise PlyFormatError("non-triangular face in mesh PLY")
                arrays["triangles"] = data["idx"].astype(np.int64)
    return arrays.get("vertices", np.zeros((0, 3))), \
        arrays.get("triangles", np.zeros((0, 3), dtype=np.int64))


def save_field_ply(points, values, path) -> None:
    """Debug dump: points with a scalar 'opacity' property, binary PLY."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if len(points) != len(values):
        raise ValueError("points/values length mismatch")
    header = ["ply", "format binary_little_endian 1.0",
              f"element vertex {len(points)}",
              "property float x", "property float y", "property float z",
              "property float opacity", "end_header"]
    rec = np.empty(len(points), dtype=np.dtype(
        [("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("opacity", "<f4")]))
    rec["x"], rec["y"], rec["z"] = points.T.astype(np.float32)
    rec["opacity"] = values.astype(np.float32)
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(rec.tobytes())


# -- images -------------------------------------------------------------------

def load_image(path) -> np.ndarray:
    """Decode an image file to (H, W, 3) float64 RGB in [0, 1]."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr


def save_image(image: np.ndarray, path) -> None:
    """Write an (H, W) or (H, W, 3) array in [0, 1] as PNG or PPM."""
    path = Path(path)
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    data = (arr * 255.0 + 0.5).astype(np.uint8)
    if path.suffix.lower() == ".ppm":
        with open(path, "wb") as fh:
            fh.write(f"P6\n{data.shape[1]} {data.shape[0]}\n255\n".encode())
            fh.write(data.tobytes())
    else:
        from PIL import Image

        Image.fromarray(data).save(path)


def depth_for_display(depth: np.ndarray, accumulation=None) -> np.ndarray:
    """Min/max-normalize a depth buffer to [0, 1] for visualization only."""
    valid = np.isfinite(depth) & (depth > 0)
    if accumulation is not None:
        valid &= accumulation > 1e-6
    if not valid.any():
        return np.zeros_like(depth)
    lo, hi = depth[valid].min(), depth[valid].max()
    span = hi - lo if hi > lo else 1.0
    out = np.where(valid, (depth - lo) / span, 0.0)
    return out
