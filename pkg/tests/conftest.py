import numpy as np
import pytest

from omnistereo_gt.completion import project_cloud
from omnistereo_gt.geometry import EquirectGeometry
from omnistereo_gt.synthetic import SimRig, demo_scene, render_lidar


@pytest.fixture(scope="session")
def small_rig():
    return SimRig(geom=EquirectGeometry(480, 128, 48.0, 144.0))


@pytest.fixture(scope="session")
def sequence(small_rig):
    """Three LiDAR frames of the demo scene with seeded azimuth jitter, plus sparse maps."""
    rng = np.random.default_rng(11)
    scene = demo_scene()
    clouds = [render_lidar(scene, small_rig, float(rng.uniform(-0.5, 0.5) * small_rig.lidar.delta_phi), i)
              for i in range(3)]
    sparse = [project_cloud(c, small_rig.extrinsics, small_rig.geom) for c in clouds]
    return scene, clouds, sparse


_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if report.when == "call":
        _ACCEPTANCE.extend(v for k, v in report.user_properties if k == "acceptance")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
