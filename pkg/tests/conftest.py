import numpy as np
import pytest

from pointmap4d import RansacConfig, SceneSpec, generate


@pytest.fixture(scope="session")
def small_scene():
    """Static 5-frame orbit scene at low resolution, FOV comparable to the
    full-size default."""
    return generate(SceneSpec(seed=1, n_frames=5, width=64, height=48,
                              focal=60.0, n_dynamic_spheres=0))


@pytest.fixture(scope="session")
def dynamic_scene():
    """Mixed static/dynamic 5-frame scene with visible moving spheres."""
    return generate(SceneSpec(seed=3, n_frames=5, width=64, height=48,
                              focal=60.0, n_dynamic_spheres=3))


@pytest.fixture(scope="session")
def spline_scene():
    return generate(SceneSpec(seed=11, n_frames=6, width=64, height=48,
                              focal=60.0, n_dynamic_spheres=1,
                              camera_path="spline"))


@pytest.fixture()
def fast_ransac():
    return RansacConfig(iterations=256, seed=5)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation via QR with positive diagonal fix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
