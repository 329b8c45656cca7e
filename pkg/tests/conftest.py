import pytest

from lidarcs.pattern import SENSOR_PRESETS, SensorSpec, synthesize_pattern
from lidarcs.scene import RenderConfig, render_scene
from lidarcs.synthetic import sphere_scene

_CRITERIA: dict[str, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    details = [v for k, v in item.user_properties if k == "detail"]
    _CRITERIA.setdefault(mark.args[0], []).append((rep.passed, "; ".join(details) or rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_CRITERIA, key=lambda s: int(s.split()[0][1:])):
        runs = _CRITERIA[label]
        ok = all(p for p, _ in runs)
        detail = " | ".join(d for _, d in runs)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")


@pytest.fixture(scope="session")
def small_sphere_cube():
    """Radius-10 sphere at a modest resolution, for quick unit tests."""
    scene = sphere_scene(10.0, 400_000)
    return render_scene(scene, RenderConfig(face_resolution=512, splat_radius=0.1))


@pytest.fixture(scope="session")
def vld16():
    return synthesize_pattern(SENSOR_PRESETS["VLD-16"])


@pytest.fixture(scope="session")
def vld64():
    return synthesize_pattern(SENSOR_PRESETS["VLD-64"])


@pytest.fixture
def coarse_spec():
    return SensorSpec("coarse", 8, -20.0, 5.0, azimuth_resolution=2.0)

