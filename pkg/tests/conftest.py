import numpy as np

from needleguide.geometry import Pose, Quat, Vec3


def random_quat(rng: np.random.Generator) -> Quat:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Quat(*q)


def random_pose(rng: np.random.Generator, trans_scale: float = 1.0) -> Pose:
    return Pose(
        Vec3.from_array(rng.uniform(-trans_scale, trans_scale, size=3)),
        random_quat(rng),
        0.0,
    )


def quat_matrix_oracle(q: Quat) -> np.ndarray:
    """Independent rotation-matrix path: R = (w^2 - |v|^2) I + 2 v v^T + 2 w [v]x."""
    w = q.w
    v = np.array([q.x, q.y, q.z])
    vx = np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])
    return (w * w - v @ v) * np.eye(3) + 2.0 * np.outer(v, v) + 2.0 * w * vx
