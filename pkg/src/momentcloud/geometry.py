"""Pure geometric computation on point clouds.

Clouds are (n, 3) float64 arrays of finite coordinates. All functions are
pure: they never mutate their inputs and are safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import RandomStream, derive_seed

ORTHO_TOL = 1e-9
DEGENERACY_REL_TOL = 1e-6


def as_cloud(points) -> np.ndarray:
    """Validate and convert to an (n, 3) float64 cloud with n >= 1."""
    cloud = np.asarray(points, dtype=np.float64)
    if cloud.ndim == 1 and cloud.shape == (3,):
        cloud = cloud.reshape(1, 3)
    if cloud.ndim != 2 or cloud.shape[1] != 3:
        raise ValueError(f"point cloud must have shape (n, 3), got {cloud.shape}")
    if cloud.shape[0] == 0:
        raise ValueError("empty point cloud")
    if not np.all(np.isfinite(cloud)):
        raise ValueError("point cloud contains non-finite coordinates")
    return cloud


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid motion p -> rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def validate(self, tol: float = ORTHO_TOL) -> None:
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rigid transform needs a 3x3 rotation and 3-vector translation")
        if np.max(np.abs(r.T @ r - np.eye(3))) > tol:
            raise ValueError("rotation matrix is not orthonormal within tolerance")
        if abs(np.linalg.det(r) - 1.0) > tol:
            raise ValueError("rotation matrix determinant is not +1 within tolerance")

    def compose(self, inner: "RigidTransform") -> "RigidTransform":
        """Transform equal to applying `inner` first, then self."""
        return RigidTransform(self.rotation @ inner.rotation,
                              self.rotation @ inner.translation + self.translation)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class NormalizationRecord:
    """Centering translation and scale applied by normalize_to_unit_sphere.

    Maps original p to normalized q = (p - centroid) / scale.
    """

    centroid: np.ndarray
    scale: float

    def invert(self, cloud) -> np.ndarray:
        return as_cloud(cloud) * self.scale + self.centroid


@dataclass(frozen=True)
class MomentSummary:
    """Centroid, centered second-moment matrix and its eigenstructure.

    `directions` rows hold the principal directions, ordered by descending
    eigenvalue and individually sign-fixed. `degenerate_pairs` flags
    eigenvalue pairs ((0,1), (1,2), (0,2)) closer than 1e-6 * trace; a
    degenerate spectrum makes the canonical pose non-unique.
    """

    centroid: np.ndarray
    sigma: np.ndarray
    eigenvalues: np.ndarray
    directions: np.ndarray
    degenerate_pairs: tuple[bool, bool, bool]

    @property
    def is_degenerate(self) -> bool:
        return any(self.degenerate_pairs)


@dataclass(frozen=True)
class KnnGraph:
    """k nearest Euclidean neighbors and their coordinate differences.

    neighbors[i] holds the k neighbor indices of point i (self excluded,
    ties broken toward the lower index); edge_features[i, j] is
    cloud[neighbors[i, j]] - cloud[i].
    """

    k: int
    neighbors: np.ndarray
    edge_features: np.ndarray


def centroid(cloud) -> np.ndarray:
    """Component-wise mean of the points (first-order moments / n)."""
    return as_cloud(cloud).mean(axis=0)


def second_moment_matrix(cloud) -> np.ndarray:
    """Sum of outer products p p^T about the origin, exactly symmetric.

    Callers wanting covariance must center the cloud first.
    """
    cloud = as_cloud(cloud)
    upper = np.empty((3, 3))
    for i in range(3):
        for j in range(i, 3):
            upper[i, j] = float(cloud[:, i] @ cloud[:, j])
            upper[j, i] = upper[i, j]
    return upper


def jacobi_eigh_3x3(matrix, tol: float = 1e-12, max_sweeps: int = 50):
    """Eigendecomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.

    Returns (eigenvalues desc, eigenvectors as rows). Iterates until the
    off-diagonal Frobenius norm drops below tol * scale or max_sweeps pass.
    """
    a = np.asarray(matrix, dtype=np.float64).copy()
    if a.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    if np.max(np.abs(a - a.T)) > 1e-12 * max(1.0, np.max(np.abs(a))):
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(3)
    scale = max(1.0, np.max(np.abs(a)))
    for _ in range(max_sweeps):
        off = np.sqrt(a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2)
        if off < tol * scale:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[p, q]
            if abs(apq) < 1e-300:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
            if theta == 0.0:
                t = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rot = np.eye(3)
            rot[p, p] = rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            a = rot.T @ a @ rot
            v = v @ rot
    evals = np.diag(a).copy()
    order = np.argsort(-evals, kind="stable")
    return evals[order], v[:, order].T


def _fix_direction_sign(direction: np.ndarray) -> np.ndarray:
    """Flip so the largest-magnitude component is positive; on exact
    magnitude ties, so the lowest-index nonzero component is positive."""
    mags = np.abs(direction)
    top = np.max(mags)
    tied = np.flatnonzero(mags == top)
    if tied.size == 1:
        pivot = tied[0]
    else:
        nonzero = np.flatnonzero(direction != 0.0)
        pivot = nonzero[0] if nonzero.size else 0
    return -direction if direction[pivot] < 0.0 else direction


def principal_directions(cloud) -> MomentSummary:
    """Eigenstructure of the centered second-moment matrix.

    Eigenvalues come sorted descending; directions are sign-fixed for
    determinism. Requires at least 3 points; collinear clouds are fine
    and simply yield a degenerate (rank-deficient) spectrum.
    """
    cloud = as_cloud(cloud)
    if cloud.shape[0] < 3:
        raise ValueError("principal directions need at least 3 points")
    c = centroid(cloud)
    sigma = second_moment_matrix(cloud - c)
    evals, evecs = jacobi_eigh_3x3(sigma)
    evals = np.where(np.abs(evals) < 1e-15 * max(1.0, np.trace(sigma)), 0.0, evals)
    directions = np.array([_fix_direction_sign(evecs[i]) for i in range(3)])
    gap_tol = DEGENERACY_REL_TOL * max(np.trace(sigma), 1e-300)
    flags = (bool(abs(evals[0] - evals[1]) <= gap_tol),
             bool(abs(evals[1] - evals[2]) <= gap_tol),
             bool(abs(evals[0] - evals[2]) <= gap_tol))
    return MomentSummary(c, sigma, evals, directions, flags)


@dataclass(frozen=True)
class CanonicalResult:
    cloud: np.ndarray
    transform: RigidTransform
    summary: MomentSummary


def canonicalize(cloud) -> CanonicalResult:
    """Rotate and translate the cloud into its principal-axes pose.

    The output is centered at the origin with a diagonal centered
    second-moment matrix. With a degenerate spectrum the pose is still
    returned but is non-unique (see summary.degenerate_pairs).
    """
    cloud = as_cloud(cloud)
    summary = principal_directions(cloud)
    rotation = summary.directions.copy()
    # the sign convention fixes directions individually; restore a proper
    # rotation (det +1) by flipping the last axis when needed
    if np.linalg.det(rotation) < 0.0:
        rotation[2] = -rotation[2]
    transform = RigidTransform(rotation, -rotation @ summary.centroid)
    return CanonicalResult(apply_rigid(cloud, transform), transform, summary)


def apply_rigid(cloud, transform: RigidTransform) -> np.ndarray:
    """Apply p -> R p + t to every point."""
    cloud = as_cloud(cloud)
    transform.validate()
    return cloud @ np.asarray(transform.rotation, dtype=np.float64).T \
        + np.asarray(transform.translation, dtype=np.float64)


def rotation_y(angle: float) -> np.ndarray:
    """Rotation matrix about the y axis by `angle` radians."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def normalize_to_unit_sphere(cloud) -> tuple[np.ndarray, NormalizationRecord]:
    """Center at the centroid and scale the maximum point norm to 1.

    Returns the normalized cloud plus the (translation, scale) record
    needed to invert the map. The scale is the bounding-sphere radius
    about the centroid, not the minimal enclosing sphere.
    """
    cloud = as_cloud(cloud)
    if cloud.shape[0] < 2:
        raise ValueError("degenerate cloud: zero extent")
    c = centroid(cloud)
    centered = cloud - c
    radius = float(np.max(np.linalg.norm(centered, axis=1)))
    if radius <= 0.0:
        raise ValueError("degenerate cloud: zero extent")
    return centered / radius, NormalizationRecord(c, radius)


# fixed monomial orderings for the polynomial lift
LIFT_NAMES_ORDER2 = ("x", "y", "z", "x^2", "y^2", "z^2", "xy", "xz", "yz")
LIFT_NAMES_ORDER3 = LIFT_NAMES_ORDER2 + (
    "x^3", "y^3", "z^3", "x^2y", "x^2z", "y^2x", "y^2z", "z^2x", "z^2y", "xyz")


def polynomial_lift(points, order: int = 2) -> np.ndarray:
    """Monomials of the coordinates in a fixed order.

    Order 2 gives (x, y, z, x^2, y^2, z^2, xy, xz, yz); order 3 appends
    the ten cubic monomials for 19 entries. Accepts a single point (3,)
    or a cloud (n, 3) and mirrors the input arity.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = as_cloud(pts)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    cols = [x, y, z, x * x, y * y, z * z, x * y, x * z, y * z]
    if order == 3:
        cols += [x * x * x, y * y * y, z * z * z,
                 x * x * y, x * x * z, y * y * x, y * y * z,
                 z * z * x, z * z * y, x * y * z]
    elif order != 2:
        raise ValueError("polynomial lift order must be 2 or 3")
    lifted = np.stack(cols, axis=1)
    return lifted[0] if single else lifted


def fps(cloud, m: int, start_index: int = 0) -> np.ndarray:
    """Greedy farthest point sampling: m indices starting at start_index.

    Each step picks the point maximizing the (squared) distance to the
    already-selected set; ties break toward the lowest index. Keeps a
    per-point min-distance array, O(n * m).
    """
    cloud = as_cloud(cloud)
    n = cloud.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    if not 0 <= start_index < n:
        raise ValueError("start_index out of range")
    selected = np.empty(m, dtype=np.int64)
    selected[0] = start_index
    min_sq = np.sum((cloud - cloud[start_index]) ** 2, axis=1)
    for i in range(1, m):
        nxt = int(np.argmax(min_sq))  # argmax returns the lowest tied index
        selected[i] = nxt
        min_sq = np.minimum(min_sq, np.sum((cloud - cloud[nxt]) ** 2, axis=1))
    return selected


def knn_graph(cloud, k: int) -> KnnGraph:
    """Brute-force k nearest neighbors with (neighbor - point) edge features.

    Self-pairs are excluded and equal distances break toward the lower
    index. Requires k < n.
    """
    cloud = as_cloud(cloud)
    n = cloud.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= n:
        raise ValueError("k must be < n")
    sq_norms = np.sum(cloud * cloud, axis=1)
    d2 = sq_norms[:, None] - 2.0 * (cloud @ cloud.T) + sq_norms[None, :]
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")  # stable: ties by index
    neighbors = order[:, :k].astype(np.int64)
    edges = cloud[neighbors] - cloud[:, None, :]
    return KnnGraph(k, neighbors, edges)


def augment(cloud, seed: int, *, y_rotation: bool = False,
            jitter_sigma: float = 0.0, dropout_ratio: float = 0.0) -> np.ndarray:
    """Seeded augmentation: y-axis rotation, clipped jitter, point dropout.

    The rotation angle is uniform in [0, 2pi); jitter is per-coordinate
    Gaussian clipped to +-3 sigma; dropout removes floor(ratio * n)
    points uniformly without replacement. Each sub-operation draws from
    its own derived stream, so toggling one never perturbs the others.
    """
    cloud = as_cloud(cloud).copy()
    if jitter_sigma < 0.0:
        raise ValueError("jitter_sigma must be >= 0")
    if not 0.0 <= dropout_ratio < 1.0:
        raise ValueError("dropout_ratio must be in [0, 1)")
    if y_rotation:
        angle = RandomStream(derive_seed(seed, 1)).uniform(1, 0.0, 2.0 * np.pi)[0]
        cloud = cloud @ rotation_y(angle).T
    if jitter_sigma > 0.0:
        noise = RandomStream(derive_seed(seed, 2)).normal(cloud.size, jitter_sigma)
        np.clip(noise, -3.0 * jitter_sigma, 3.0 * jitter_sigma, out=noise)
        cloud = cloud + noise.reshape(cloud.shape)
    if dropout_ratio > 0.0:
        n = cloud.shape[0]
        drop = int(np.floor(dropout_ratio * n))
        if drop >= n:
            raise ValueError("dropout would remove every point")
        if drop > 0:
            doomed = RandomStream(derive_seed(seed, 3)).choice(n, drop)
            cloud = np.delete(cloud, doomed, axis=0)
    return cloud
