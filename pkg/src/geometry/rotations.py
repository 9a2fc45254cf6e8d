"""
Rotation Parameterizations
Conversions between rotation matrices and the quaternion, 6D and 9D
representations used as regression targets, plus the angular error metric.

All math runs in float64 regardless of the training precision.

Layouts:
- Quaternion: (w, x, y, z), canonicalized to the w >= 0 hemisphere
- 6D: [column 1; column 2] of the rotation matrix
- 9D: row-major flattening of a 3x3 matrix
"""

import numpy as np

from src.errors import DegenerateInputError, InvalidInputError

ROTATION_TOL = 1e-9      # orthonormality / determinant tolerance of produced rotations
INPUT_TOL = 1e-6         # tolerance accepted for rotations handed in by callers
DEGENERATE_EPS = 1e-12


def _as_vector(v, n: int, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64).reshape(-1)
    if arr.shape != (n,):
        raise InvalidInputError(f"{name}: expected {n} values, got shape {np.shape(v)}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name}: non-finite input {arr}")
    return arr


def _as_matrix(m, name: str) -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.shape != (3, 3):
        raise InvalidInputError(f"{name}: expected a 3x3 matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name}: non-finite matrix")
    return arr


def orthonormality_error(R) -> tuple:
    """Return (||R^T R - I||_F, |det(R) - 1|)."""
    R = np.asarray(R, dtype=np.float64)
    return (
        float(np.linalg.norm(R.T @ R - np.eye(3))),
        float(abs(np.linalg.det(R) - 1.0)),
    )


def is_rotation(R, tol: float = ROTATION_TOL) -> bool:
    """True if R is a proper rotation within tol (Frobenius orthonormality and det)."""
    R = np.asarray(R)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    ortho, det = orthonormality_error(R)
    return ortho < tol and det < tol


def validate_rotation(R, tol: float = INPUT_TOL, name: str = "rotation") -> np.ndarray:
    """Return R as a float64 array, raising InvalidInputError if it is not a rotation."""
    R = _as_matrix(R, name)
    ortho, det = orthonormality_error(R)
    if ortho >= tol or det >= tol:
        raise InvalidInputError(
            f"{name}: not a rotation (||R^T R - I|| = {ortho:.3e}, |det - 1| = {det:.3e})"
        )
    return R


def rot_x(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation (normalized Gaussian quaternion)."""
    q = rng.normal(size=4)
    while np.linalg.norm(q) < 1e-6:
        q = rng.normal(size=4)
    return quat_to_matrix(q)


# ---------------------------------------------------------------------------
# Quaternions
# ---------------------------------------------------------------------------

def quat_to_matrix(q) -> np.ndarray:
    """
    Unit quaternion (w, x, y, z) to rotation matrix.

    Non-unit input is normalized. q and -q give bit-identical matrices since
    every entry is a product of two components.
    """
    q = _as_vector(q, 4, "quat_to_matrix")
    norm = np.linalg.norm(q)
    if norm < DEGENERATE_EPS:
        raise InvalidInputError("quat_to_matrix: zero-norm quaternion")
    w, x, y, z = q / norm

    return np.array([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])


def canonicalize_quat(q) -> np.ndarray:
    """
    Map q to the w >= 0 hemisphere. At w == 0 the first nonzero
    component is made positive.
    """
    q = _as_vector(q, 4, "canonicalize_quat")
    for component in q:
        if component > 0:
            return q
        if component < 0:
            return -q
    raise InvalidInputError("canonicalize_quat: zero quaternion")


def matrix_to_quat(R) -> np.ndarray:
    """
    Rotation matrix to unit quaternion (w, x, y, z) with w >= 0.

    Shepperd's method: branch on the largest of (trace, R00, R11, R22) so the
    square root is always taken of a quantity >= 1.
    """
    R = validate_rotation(R, tol=INPUT_TOL, name="matrix_to_quat")
    trace = np.trace(R)
    diag = np.diag(R)
    k = int(np.argmax([trace, diag[0], diag[1], diag[2]]))

    if k == 0:
        s = 2.0 * np.sqrt(1.0 + trace)
        q = np.array([
            0.25 * s,
            (R[2, 1] - R[1, 2]) / s,
            (R[0, 2] - R[2, 0]) / s,
            (R[1, 0] - R[0, 1]) / s,
        ])
    elif k == 1:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([
            (R[2, 1] - R[1, 2]) / s,
            0.25 * s,
            (R[0, 1] + R[1, 0]) / s,
            (R[0, 2] + R[2, 0]) / s,
        ])
    elif k == 2:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([
            (R[0, 2] - R[2, 0]) / s,
            (R[0, 1] + R[1, 0]) / s,
            0.25 * s,
            (R[1, 2] + R[2, 1]) / s,
        ])
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([
            (R[1, 0] - R[0, 1]) / s,
            (R[0, 2] + R[2, 0]) / s,
            (R[1, 2] + R[2, 1]) / s,
            0.25 * s,
        ])

    q = q / np.linalg.norm(q)
    return canonicalize_quat(q)


# ---------------------------------------------------------------------------
# 6D (two columns, Gram-Schmidt)
# ---------------------------------------------------------------------------

def sixd_to_matrix(v) -> np.ndarray:
    """
    Gram-Schmidt recovery of a rotation from its 6D representation.

    c1 = normalize(a1); c2 = normalize(a2 - (a2 . c1) c1); c3 = c1 x c2.
    Degenerate input is an error, never a silent fallback.
    """
    v = _as_vector(v, 6, "sixd_to_matrix")
    a1, a2 = v[:3], v[3:]

    n1 = np.linalg.norm(a1)
    if n1 < DEGENERATE_EPS:
        raise DegenerateInputError(f"sixd_to_matrix: first column has norm {n1:.3e}")
    c1 = a1 / n1

    residual = a2 - np.dot(a2, c1) * c1
    n2 = np.linalg.norm(residual)
    if n2 < DEGENERATE_EPS:
        raise DegenerateInputError("sixd_to_matrix: second column is parallel to the first")
    c2 = residual / n2
    c3 = np.cross(c1, c2)

    return np.column_stack([c1, c2, c3])


def matrix_to_sixd(R) -> np.ndarray:
    """First two columns of R, stacked: [col1; col2]."""
    R = _as_matrix(R, "matrix_to_sixd")
    return np.concatenate([R[:, 0], R[:, 1]])


# ---------------------------------------------------------------------------
# 9D (SVD orthogonalization)
# ---------------------------------------------------------------------------

def nined_to_matrix(v) -> np.ndarray:
    """
    Project a row-major 3x3 matrix onto SO(3): R = U diag(1, 1, det(U V^T)) V^T.
    """
    M = _as_vector(v, 9, "nined_to_matrix").reshape(3, 3)
    U, S, Vt = np.linalg.svd(M)
    if S.min() < DEGENERATE_EPS:
        raise DegenerateInputError(
            f"nined_to_matrix: rank-deficient input (sigma_min = {S.min():.3e})"
        )
    d = np.sign(np.linalg.det(U @ Vt))
    return U @ np.diag([1.0, 1.0, d]) @ Vt


def matrix_to_nined(R) -> np.ndarray:
    """Row-major flattening."""
    return _as_matrix(R, "matrix_to_nined").reshape(9).copy()


# ---------------------------------------------------------------------------
# Metric
# ---------------------------------------------------------------------------

def angular_error(Ra, Rb) -> float:
    """
    Geodesic distance between two rotations in degrees, in [0, 180].

    The angle is atan2 of the skew part of Ra^T Rb against its trace, so
    identical inputs give exactly 0. trace(Ra^T Rb) is computed as
    sum(Ra * Rb), which is exactly symmetric.
    """
    Ra = _as_matrix(Ra, "angular_error")
    Rb = _as_matrix(Rb, "angular_error")
    skew = Ra.T @ Rb - Rb.T @ Ra
    sin_angle = np.linalg.norm([skew[2, 1], skew[0, 2], skew[1, 0]]) / 2.0
    cos_angle = (np.sum(Ra * Rb) - 1.0) / 2.0
    return float(np.degrees(np.arctan2(sin_angle, cos_angle)))


# Rotation target kinds and their vector sizes
ROTATION_DIMS = {"quat": 4, "6d": 6, "9d": 9}


def matrix_to_target(R, kind: str) -> np.ndarray:
    """Encode a rotation as a regression target of the given kind."""
    if kind == "quat":
        return matrix_to_quat(R)
    if kind == "6d":
        return matrix_to_sixd(R)
    if kind == "9d":
        return matrix_to_nined(R)
    raise InvalidInputError(f"unknown rotation kind '{kind}' (expected one of {sorted(ROTATION_DIMS)})")


def target_to_matrix(v, kind: str) -> np.ndarray:
    """
    Recover a rotation from a raw predicted vector:
    normalization for quaternions, Gram-Schmidt for 6D, SVD for 9D.
    """
    if kind == "quat":
        return quat_to_matrix(v)
    if kind == "6d":
        return sixd_to_matrix(v)
    if kind == "9d":
        return nined_to_matrix(v)
    raise InvalidInputError(f"unknown rotation kind '{kind}' (expected one of {sorted(ROTATION_DIMS)})")
