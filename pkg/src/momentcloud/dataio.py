"""Dataset ingestion and generation.

Covers OFF triangle meshes, area-weighted surface sampling, the
procedural shape benchmark that stands in for large CAD datasets at
desk scale, point-cloud file formats, and dataset manifests with
stratified splits. Clouds live as float64 in memory and float32 on
disk; the precision loss is far below every test tolerance.
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .geometry import as_cloud, fps, rotation_y
from .rng import RandomStream, derive_seed

DEGENERATE_AREA_TOL = 1e-12
FPS_CANDIDATE_FACTOR = 4
SHAPE_KINDS = ("sphere", "cube", "cylinder", "cone", "torus", "pyramid",
               "ellipsoid", "capsule")
CLOUD_MAGIC = b"MPC1"


# ---------------------------------------------------------------------------
# triangle meshes

@dataclass(frozen=True)
class TriangleMesh:
    """Vertices (V, 3) and triangle index triples (F, 3).

    dropped_degenerate counts faces discarded for having area below
    tolerance during construction.
    """

    vertices: np.ndarray
    faces: np.ndarray
    dropped_degenerate: int = 0


def make_mesh(vertices, faces) -> TriangleMesh:
    """Validate indices and drop zero-area faces."""
    vertices = as_cloud(vertices)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if faces.size and (faces.min() < 0 or faces.max() >= vertices.shape[0]):
        raise ValueError("face index out of range")
    areas = triangle_areas(vertices, faces)
    keep = areas > DEGENERATE_AREA_TOL
    return TriangleMesh(vertices, faces[keep], int(np.count_nonzero(~keep)))


def triangle_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a = vertices[faces[:, 0]]
    cross = np.cross(vertices[faces[:, 1]] - a, vertices[faces[:, 2]] - a)
    return 0.5 * np.linalg.norm(cross, axis=1)


def parse_off(source) -> TriangleMesh:
    """Parse OFF text: header, counts, vertices, faces.

    Polygons with more than three vertices are fan-triangulated from
    their first vertex. Comment (#) and blank lines are skipped anywhere;
    content after the declared faces is an error.
    """
    text = source.read() if hasattr(source, "read") else source
    lines = [(i + 1, line.split("#", 1)[0].strip())
             for i, line in enumerate(text.splitlines())]
    significant = [(ln, s) for ln, s in lines if s]
    if not significant:
        raise ValueError("line 1: expected OFF header")
    cursor = 0

    def next_line() -> tuple[int, str]:
        nonlocal cursor
        if cursor >= len(significant):
            last = significant[-1][0] if significant else 1
            raise ValueError(f"line {last}: unexpected end of file")
        item = significant[cursor]
        cursor += 1
        return item

    ln, header = next_line()
    if header == "OFF":
        ln, counts_text = next_line()
    elif header.startswith("OFF"):
        counts_text = header[3:].strip()  # counts on the header line
    else:
        raise ValueError(f"line {ln}: expected OFF header, got {header!r}")
    fields = counts_text.split()
    if len(fields) != 3:
        raise ValueError(f"line {ln}: expected 'vertices faces edges' counts")
    try:
        n_vertices, n_faces, _ = (int(f) for f in fields)
    except ValueError as exc:
        raise ValueError(f"line {ln}: malformed counts: {exc}") from None
    if n_vertices < 1 or n_faces < 0:
        raise ValueError(f"line {ln}: counts out of range")

    vertices = np.empty((n_vertices, 3))
    for i in range(n_vertices):
        ln, line = next_line()
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"line {ln}: expected 3 vertex coordinates")
        try:
            vertices[i] = [float(p) for p in parts]
        except ValueError as exc:
            raise ValueError(f"line {ln}: malformed vertex: {exc}") from None

    triangles: list[tuple[int, int, int]] = []
    for _ in range(n_faces):
        ln, line = next_line()
        parts = line.split()
        try:
            arity = int(parts[0])
            idx = [int(p) for p in parts[1:]]
        except (ValueError, IndexError):
            raise ValueError(f"line {ln}: malformed face") from None
        if arity < 3 or len(idx) != arity:
            raise ValueError(f"line {ln}: face lists {len(idx)} indices, declared {arity}")
        if min(idx) < 0 or max(idx) >= n_vertices:
            raise ValueError(f"line {ln}: face index out of range")
        for j in range(1, arity - 1):  # fan rule
            triangles.append((idx[0], idx[j], idx[j + 1]))
    if cursor != len(significant):
        ln = significant[cursor][0]
        raise ValueError(f"line {ln}: trailing content after declared faces")
    return make_mesh(vertices, np.array(triangles, dtype=np.int64).reshape(-1, 3))


def serialize_off(mesh: TriangleMesh) -> str:
    out = io.StringIO()
    out.write("OFF\n")
    out.write(f"{mesh.vertices.shape[0]} {mesh.faces.shape[0]} 0\n")
    for v in mesh.vertices:
        out.write(f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
    for f in mesh.faces:
        out.write(f"3 {f[0]} {f[1]} {f[2]}\n")
    return out.getvalue()


def sample_surface_points(mesh: TriangleMesh, count: int, stream: RandomStream) -> np.ndarray:
    """Area-weighted uniform points on the mesh surface."""
    if mesh.faces.shape[0] < 1:
        raise ValueError("mesh has no non-degenerate faces")
    areas = triangle_areas(mesh.vertices, mesh.faces)
    total = float(areas.sum())
    if total <= 0.0:
        raise ValueError("zero total area")
    cum = np.cumsum(areas)
    picks = np.searchsorted(cum, stream.uniform(count, 0.0, total), side="right")
    picks = np.minimum(picks, len(cum) - 1)
    r1 = np.sqrt(stream.uniform(count))
    r2 = stream.uniform(count)
    w = np.stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2], axis=1)
    corners = mesh.vertices[mesh.faces[picks]]  # (count, 3, 3)
    return np.einsum("pc,pcd->pd", w, corners)


def sample_surface(mesh: TriangleMesh, n: int, seed: int) -> np.ndarray:
    """n surface points: 4n area-weighted candidates thinned by farthest
    point sampling (started at candidate 0). Deterministic per seed."""
    candidates = sample_surface_points(mesh, FPS_CANDIDATE_FACTOR * n,
                                       RandomStream(derive_seed(seed, 1)))
    return candidates[fps(candidates, n, start_index=0)]


# ---------------------------------------------------------------------------
# synthetic shape benchmark

@dataclass(frozen=True)
class SyntheticShapeRecipe:
    """Recipe for one procedurally sampled shape instance.

    pose_seed drives every random draw for the sample: surface sampling,
    the y-axis pose rotation, and the additive noise.
    """

    kind: str
    size_params: dict
    pose_seed: int
    noise_sigma: float = 0.01
    num_points: int = 256

    def validate(self) -> None:
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if self.num_points < 64:
            raise ValueError("num_points must be >= 64")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be >= 0")


def _unit_directions(stream: RandomStream, n: int) -> np.ndarray:
    g = stream.normal(3 * n).reshape(n, 3)
    norms = np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
    return g / norms


def _sample_sphere(p: dict, stream: RandomStream, n: int) -> np.ndarray:
    return p["radius"] * _unit_directions(stream, n)


def _sample_cube(p: dict, stream: RandomStream, n: int) -> np.ndarray:
    h = p["half_extent"]
    face = stream.integers(n, 6)
    uv = stream.uniform(2 * n, -h, h).reshape(n, 2)
    pts = np.empty((n, 3))
    axis = face // 2
    sign = np.where(face % 2 == 0, h, -h)
    for i in range(n):
        others = [a for a in range(3) if a != axis[i]]
        pts[i, axis[i]] = sign[i]
        pts[i, others[0]] = uv[i, 0]
        pts[i, others[1]] = uv[i, 1]
    return pts


def _sample_cylinder(p: dict, stream: RandomStream, n: int) -> np.ndarray:
    r, h = p["radius"], p["height"]
    side = 2.0 * np.pi * r * h
    cap = np.pi * r * r
    part = stream.uniform(n, 0.0, side + 2.0 * cap)
    theta = stream.uniform(n, 0.0, 2.0 * np.pi)
    u = stream.uniform(n)
    pts = np.empty((n, 3))
    on_side = part < side
    pts[:, 0] = np.cos(theta)
    pts[:, 2] = np.sin(theta)
    rho = np.where(on_side, r, r * np.sqrt(u))
    pts[:, 0] *= rho
    pts[:, 2] *= rho
    cap_sign = np.where(part < side + cap, 1.0, -1.0)
    pts[:, 1] = np.where(on_side, (u - 0.5) * h, cap_sign * h / 2.0)
    return pts


def _sample_cone(p: dict, stream: RandomStream, n: int) -> np.ndarray:
    r, h = p["radius"], p["height"]
    base = np.pi * r * r
    lateral = np.pi * r * np.hypot(r, h)
    part = stream.uniform(n, 0.0, base + lateral)
    theta = stream.uniform(n, 0.0, 2.0 * np.pi)
    s = np.sqrt(stream.uniform(n))  # area element grows linearly from apex
    on_base = part < base
    rho = r * s
    y = np.where(on_base, -h / 2.0, h / 2.0 - s * h)
    return np.stack([rho * np.cos(theta), y, rho * np.sin(theta)], axis=1)


def _sample_torus(p: dict, stream: RandomStream, n: int) -> np.ndarray:
    big_r, small_r = p["major_radius"], p["minor_radius"]
    theta = stream.uniform(n, 0.0, 2.0 * np.pi)
    phi = np.empty(n)
    filled = 0
    while filled < n:  # rejection-correct the tube angle density
        cand = stream.uniform(2 * (n - filled), 0.0, 2.0 * np.pi)
        accept_u = stream.uniform(2 * (n - filled))
        ok = cand[accept_u < (big_r + small_r * np.cos(cand)) / (big_r + small_r)]
        take = min(len(ok), n - filled)
        phi[filled:filled + take] = ok[:take]
        filled += take
    ring = big_r + small_r * np.cos(phi)
    return np.stack([ring * np.cos(theta), small_r * np.sin(phi), ring * np.sin(theta)], axis=1)


def _sample_pyramid(p: dict, stream: RandomStream, n: int) -> np.ndarray:
    a, h = p["base_half_extent"], p["height"]
    apex = np.array([0.0, h / 2.0, 0.0])
    corners = np.array([[a, -h / 2.0, a], [a, -h / 2.0, -a],
                        [-a, -h / 2.0, -a], [-a, -h / 2.0, a]])
    base_area = 4.0 * a * a
    side_area = a * np.hypot(h, a)  # per triangular face
    part = stream.uniform(n, 0.0, base_area + 4.0 * side_area)
    uv = stream.uniform(2 * n, -a, a).reshape(n, 2)
    r1 = np.sqrt(stream.uniform(n))
    r2 = stream.uniform(n)
    pts = np.empty((n, 3))
    for i in range(n):
        if part[i] < base_area:
            pts[i] = [uv[i, 0], -h / 2.0, uv[i, 1]]
        else:
            face = min(int((part[i] - base_area) / side_area), 3)
            b, c = corners[face], corners[(face + 1) % 4]
            w = (1.0 - r1[i], r1[i] * (1.0 - r2[i]), r1[i] * r2[i])
            pts[i] = w[0] * apex + w[1] * b + w[2] * c
    return pts


def _sample_ellipsoid(p: dict, stream: RandomStream, n: int) -> np.ndarray:
    a, b, c = p["semi_x"], p["semi_y"], p["semi_z"]
    bound = max(b * c, a * c, a * b)
    pts = np.empty((n, 3))
    filled = 0
    while filled < n:  # rejection weight = local area distortion
        u = _unit_directions(stream, 2 * (n - filled))
        w = np.sqrt((b * c * u[:, 0]) ** 2 + (a * c * u[:, 1]) ** 2
                    + (a * b * u[:, 2]) ** 2) / bound
        keep = u[stream.uniform(len(u)) < w]
        take = min(len(keep), n - filled)
        pts[filled:filled + take] = keep[:take] * np.array([a, b, c])
        filled += take
    return pts


def _sample_capsule(p: dict, stream: RandomStream, n: int) -> np.ndarray:
    r, h = p["radius"], p["height"]
    side = 2.0 * np.pi * r * h
    sphere = 4.0 * np.pi * r * r
    part = stream.uniform(n, 0.0, side + sphere)
    theta = stream.uniform(n, 0.0, 2.0 * np.pi)
    y_side = stream.uniform(n, -h / 2.0, h / 2.0)
    dirs = _unit_directions(stream, n)
    pts = np.empty((n, 3))
    for i in range(n):
        if part[i] < side:
            pts[i] = [r * np.cos(theta[i]), y_side[i], r * np.sin(theta[i])]
        else:
            cap = r * dirs[i]
            cap[1] += h / 2.0 if dirs[i, 1] >= 0.0 else -h / 2.0
            pts[i] = cap
    return pts


_SAMPLERS = {
    "sphere": _sample_sphere,
    "cube": _sample_cube,
    "cylinder": _sample_cylinder,
    "cone": _sample_cone,
    "torus": _sample_torus,
    "pyramid": _sample_pyramid,
    "ellipsoid": _sample_ellipsoid,
    "capsule": _sample_capsule,
}

# documented size-parameter ranges for random_recipe
SIZE_RANGES = {
    "sphere": {"radius": (0.6, 1.0)},
    "cube": {"half_extent": (0.5, 0.9)},
    "cylinder": {"radius": (0.35, 0.55), "height": (1.4, 2.0)},
    "cone": {"radius": (0.5, 0.8), "height": (1.2, 1.8)},
    "torus": {"major_radius": (0.7, 1.0), "minor_ratio": (0.25, 0.4)},
    "pyramid": {"base_half_extent": (0.5, 0.8), "height": (1.0, 1.6)},
    "ellipsoid": {"semi_x": (0.8, 1.1), "ratio_y": (0.55, 0.75), "ratio_z": (0.55, 0.75)},
    "capsule": {"radius": (0.3, 0.5), "height": (0.8, 1.4)},
}


def sample_shape(kind: str, size_params: dict, stream: RandomStream, n: int) -> np.ndarray:
    """Analytic surface sample of one shape in its canonical pose
    (origin-centered, symmetry axis along y)."""
    if kind not in _SAMPLERS:
        raise ValueError(f"unknown shape kind {kind!r}")
    return _SAMPLERS[kind](size_params, stream, n)


def random_recipe(kind: str, seed: int, *, num_points: int = 256,
                  noise_sigma: float = 0.01) -> SyntheticShapeRecipe:
    """Recipe with size parameters drawn from the documented ranges."""
    stream = RandomStream(derive_seed(seed, 7))
    params: dict[str, float] = {}
    for name, (lo, hi) in SIZE_RANGES[kind].items():
        params[name] = float(stream.uniform(1, lo, hi)[0])
    if kind == "torus":
        params["minor_radius"] = params.pop("minor_ratio") * params["major_radius"]
    if kind == "ellipsoid":
        params["semi_y"] = params.pop("ratio_y") * params["semi_x"]
        params["semi_z"] = params.pop("ratio_z") * params["semi_y"]
    return SyntheticShapeRecipe(kind, params, derive_seed(seed, 8),
                                noise_sigma, num_points)


def generate_synthetic(recipe: SyntheticShapeRecipe) -> tuple[np.ndarray, str]:
    """Sample the recipe's surface, apply a random y-rotation and noise,
    and scale the farthest point to unit norm (about the origin, so an
    exact sphere keeps all norms equal)."""
    recipe.validate()
    root = RandomStream(recipe.pose_seed)
    pts = sample_shape(recipe.kind, recipe.size_params, root.derive(1), recipe.num_points)
    angle = float(root.derive(2).uniform(1, 0.0, 2.0 * np.pi)[0])
    pts = pts @ rotation_y(angle).T
    if recipe.noise_sigma > 0.0:
        noise = root.derive(3).normal(pts.size, recipe.noise_sigma)
        np.clip(noise, -3.0 * recipe.noise_sigma, 3.0 * recipe.noise_sigma, out=noise)
        pts = pts + noise.reshape(pts.shape)
    return pts / np.max(np.linalg.norm(pts, axis=1)), recipe.kind


# ---------------------------------------------------------------------------
# point-cloud files

def write_cloud_text(path, cloud) -> None:
    cloud = as_cloud(cloud)
    with open(path, "w", encoding="ascii") as fh:
        for x, y, z in cloud:
            fh.write(f"{x:.9g} {y:.9g} {z:.9g}\n")


def read_cloud_text(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"line {ln}: expected 3 coordinates")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ValueError(f"line {ln}: malformed coordinate: {exc}") from None
    if not rows:
        raise ValueError("empty point cloud")
    return as_cloud(np.array(rows))


def write_cloud_binary(path, cloud) -> None:
    cloud = as_cloud(cloud)
    with open(path, "wb") as fh:
        fh.write(CLOUD_MAGIC)
        fh.write(struct.pack("<I", cloud.shape[0]))
        fh.write(cloud.astype("<f4").tobytes())


def read_cloud_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CLOUD_MAGIC:
        raise ValueError("bad magic")
    if len(blob) < 8:
        raise ValueError("truncated point cloud file")
    (count,) = struct.unpack("<I", blob[4:8])
    expected = 8 + 12 * count
    if len(blob) < expected:
        raise ValueError("truncated point cloud file")
    if len(blob) > expected:
        raise ValueError("trailing garbage after point data")
    pts = np.frombuffer(blob[8:], dtype="<f4").reshape(count, 3)
    return as_cloud(pts.astype(np.float64))


def read_cloud(path) -> np.ndarray:
    """Read either format, sniffing the binary magic."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    return read_cloud_binary(path) if head == CLOUD_MAGIC else read_cloud_text(path)


# ---------------------------------------------------------------------------
# manifests and the benchmark builder

@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    path: str
    label: int
    split: str


@dataclass(frozen=True)
class DatasetManifest:
    classes: tuple
    seed: int
    entries: tuple

    def split_entries(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]


def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "classes": list(manifest.classes),
        "seed": manifest.seed,
        "entries": [{"id": e.sample_id, "path": e.path, "label": e.label,
                     "split": e.split} for e in manifest.entries],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_manifest(path) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    for key in ("classes", "seed", "entries"):
        if key not in doc:
            raise ValueError(f"manifest missing field {key!r}")
    entries = tuple(ManifestEntry(e["id"], e["path"], int(e["label"]), e["split"])
                    for e in doc["entries"])
    ids = [e.sample_id for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate sample ids in manifest")
    labels = {e.label for e in entries}
    if labels and (min(labels) < 0 or max(labels) >= len(doc["classes"])):
        raise ValueError("entry label outside the class table")
    return DatasetManifest(tuple(doc["classes"]), int(doc["seed"]), entries)


def build_benchmark(out_dir, *, classes=SHAPE_KINDS, samples_per_class: int = 100,
                    num_points: int = 256, seed: int = 0, noise_sigma: float = 0.01,
                    train_fraction: float = 0.8) -> DatasetManifest:
    """Materialize a balanced synthetic benchmark under out_dir.

    Each class gets samples_per_class generated clouds written as MPC1
    binaries plus a stratified train/test split (exact per-class
    fractions). The manifest lands at out_dir/manifest.json.
    """
    classes = tuple(classes)
    if len(classes) < 2:
        raise ValueError("need at least 2 classes")
    for kind in classes:
        if kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {kind!r}")
    n_train = int(samples_per_class * train_fraction)
    n_test = samples_per_class - n_train
    if n_train < 1 or n_test < 1:
        raise ValueError("samples_per_class too small for the requested split")
    os.makedirs(out_dir, exist_ok=True)
    entries: list[ManifestEntry] = []
    for label, kind in enumerate(classes):
        perm = RandomStream(derive_seed(seed, 50, label)).permutation(samples_per_class)
        split_of = {int(perm[i]): ("train" if i < n_train else "test")
                    for i in range(samples_per_class)}
        for s in range(samples_per_class):
            recipe = random_recipe(kind, derive_seed(seed, label, s),
                                   num_points=num_points, noise_sigma=noise_sigma)
            cloud, _ = generate_synthetic(recipe)
            rel = f"{kind}_{s:04d}.mpc1"
            write_cloud_binary(os.path.join(out_dir, rel), cloud)
            entries.append(ManifestEntry(f"{kind}_{s:04d}", rel, label, split_of[s]))
    manifest = DatasetManifest(classes, seed, tuple(entries))
    save_manifest(manifest, os.path.join(out_dir, "manifest.json"))
    return manifest


def load_split(manifest: DatasetManifest, split: str, base_dir) -> list[tuple[np.ndarray, int]]:
    """(cloud, label) pairs for one split; paths resolve against base_dir."""
    picked = manifest.split_entries(split)
    if not picked:
        raise ValueError(f"manifest has no {split!r} entries")
    return [(read_cloud(os.path.join(base_dir, e.path)), e.label) for e in picked]
