import math

import numpy as np
import pandas as pd
import pytest

from app.exceptions import GeometryError, SceneValidationError
from app.models import LogisticLaw
from app.services import em
from app.services.raytrace import (
    PropagationPath,
    RcsSource,
    assemble_channel,
    scatter_amplitude,
    trace_all,
    trace_los,
    trace_reflections,
    trace_scatter,
    write_paths_csv,
)
from app.services.scene import C0, object_box, wavelength

LAW = LogisticLaw(location_dbsm=6.17, scale_dbsm=3.9)


def path_with_loss(db: float) -> PropagationPath:
    return PropagationPath("scatter", 10 ** (-db / 20), 1e-7, 1e-8, 5.0, 5.0)


def test_los_default_geometry(scene):
    los = trace_los(scene)
    assert los.path_loss_db == pytest.approx(90.39, abs=0.01)
    assert los.delay_s * 1e9 == pytest.approx(43.87, abs=0.01)
    assert los.excess_delay_s == 0.0
    assert los.r1_m == pytest.approx(math.sqrt(13**2 + 2**2))


def test_los_unit_case(scene):
    unit = scene.model_copy(
        update={"frequency_hz": C0, "tx_position_m": (0.0, 5.0, 2.0), "rx_position_m": (0.0, 6.0, 2.0)}
    )
    assert wavelength(unit) == pytest.approx(1.0)
    assert trace_los(unit).path_loss_db == pytest.approx(20 * math.log10(4 * math.pi), abs=1e-9)


def test_antenna_gains_lower_path_loss(scene):
    gained = scene.model_copy(update={"tx_gain_dbi": 10.0, "rx_gain_dbi": 5.0})
    assert trace_los(gained).path_loss_db == pytest.approx(trace_los(scene).path_loss_db - 15.0, abs=1e-9)


def test_coincident_antennas(scene):
    broken = scene.model_copy(update={"rx_position_m": scene.tx_position_m})
    with pytest.raises(GeometryError):
        trace_los(broken)


def test_reflections_follow_the_image_method(scene):
    ground, wall_near, wall_far = trace_reflections(scene)
    assert ground.kind == "ground_reflection"
    assert ground.r1_m + ground.r2_m == pytest.approx(math.sqrt(13**2 + 5**2), rel=1e-12)
    # images of TX in y = 0 and y = 16
    assert wall_near.r1_m + wall_near.r2_m == pytest.approx(math.hypot(17.0, 2.0), rel=1e-12)
    assert wall_far.r1_m + wall_far.r2_m == pytest.approx(math.hypot(15.0, 2.0), rel=1e-12)
    los_delay = trace_los(scene).delay_s
    for path in (ground, wall_near, wall_far):
        assert path.excess_delay_s == pytest.approx(path.delay_s - los_delay, rel=1e-12)
        assert path.excess_delay_s > 0


def test_specular_point_splits_path_by_similar_triangles(scene):
    ground = trace_reflections(scene)[0]
    # TX height 3.5, RX height 1.5
    assert ground.r1_m / ground.r2_m == pytest.approx(3.5 / 1.5, rel=1e-12)


def test_ground_reflection_amplitude(scene):
    ground = trace_reflections(scene)[0]
    total = math.sqrt(13**2 + 5**2)
    lam = wavelength(scene)
    gamma = em.reflection_coefficient(
        em.ReflectionQuery(math.acos(5 / total), em.GROUND_POLARIZATION, em.HalfSpace(6.0), lam)
    )
    assert abs(ground.amplitude) == pytest.approx(abs(gamma) * lam / (4 * math.pi * total), rel=1e-12)
    assert abs(ground.amplitude) < abs(trace_los(scene).amplitude)


def test_short_walls_drop_wall_reflections(scene):
    short = scene.model_copy(update={"wall_height_m": 1.0})
    kinds = [p.kind for p in trace_reflections(short)]
    assert kinds == ["ground_reflection"]


def test_scatter_amplitude_formula():
    lam = 299_792_458.0 / 60e9
    amp = scatter_amplitude(1.0, 10.0, 10.0, lam)
    assert em.path_loss_db(amp) == pytest.approx(119.00, abs=0.01)
    assert em.path_loss_db(amp) == pytest.approx(10 * math.log10((4 * math.pi) ** 3 * 1e4 / lam**2), abs=1e-9)


def test_scatter_loss_grows_with_distance():
    lam = 0.005
    losses = [em.path_loss_db(scatter_amplitude(1.0, r1, 10.0, lam)) for r1 in (2.0, 5.0, 10.0, 40.0)]
    assert losses == sorted(losses)
    assert losses[1] - losses[0] == pytest.approx(20 * math.log10(2.5), abs=1e-9)


def test_quasi_scatter_is_reproducible(scene):
    box = object_box(scene, "pedestrian", (10.0, 1.0, 1.0))
    source = RcsSource.quasi(LAW)
    first = trace_scatter(scene, box, source, np.random.default_rng(3), "p")
    second = trace_scatter(scene, box, source, np.random.default_rng(3), "p")
    assert first.sigma_dbsm == second.sigma_dbsm
    assert first.amplitude == second.amplitude
    assert first.object_id == "p"


def test_quasi_source_needs_law_and_generator(scene):
    with pytest.raises(GeometryError):
        RcsSource("quasi")
    box = object_box(scene, "pedestrian", (10.0, 1.0, 1.0))
    with pytest.raises(GeometryError):
        trace_scatter(scene, box, RcsSource.quasi(LAW), None)


def test_scatter_geometry(scene):
    box = object_box(scene, "parked_car", (20.0, 3.0, 1.0))
    path = trace_scatter(scene, box, RcsSource.deterministic())
    assert path.r1_m == pytest.approx(math.dist((0, 2, 3.5), (20, 3, 1)))
    assert path.r2_m == pytest.approx(math.dist((20, 3, 1), (0, 15, 1.5)))
    assert path.delay_s == pytest.approx((path.r1_m + path.r2_m) / C0)
    assert path.excess_delay_s > 0
    assert -100.0 <= path.sigma_dbsm < 80.0


def test_scatter_outside_canyon(scene):
    box = object_box(scene, "pedestrian", (200.0, 1.0, 1.0))
    with pytest.raises(SceneValidationError):
        trace_scatter(scene, box, RcsSource.deterministic())


def test_object_on_antenna(scene):
    box = object_box(scene, "pedestrian", scene.tx_position_m)
    with pytest.raises(GeometryError):
        trace_scatter(scene, box, RcsSource.quasi(LAW), np.random.default_rng(0))


def test_identical_paths_add_in_power():
    for n in (1, 2, 5, 10):
        summary = assemble_channel([path_with_loss(120.0)] * n)
        assert summary.path_loss_db == pytest.approx(120.0 - 10 * math.log10(n), abs=1e-9)
        assert summary.scatter_path_loss_db == pytest.approx(summary.path_loss_db)


def test_two_paths_combine():
    summary = assemble_channel([path_with_loss(100.0), path_with_loss(110.0)])
    assert summary.path_loss_db == pytest.approx(99.59, abs=0.01)


def test_scatter_power_excludes_los(scene):
    los = trace_los(scene)
    summary = assemble_channel([los, path_with_loss(130.0)])
    assert summary.scatter_path_loss_db == pytest.approx(130.0)
    assert summary.path_loss_db < los.path_loss_db


def test_empty_channel():
    with pytest.raises(GeometryError):
        assemble_channel([])


def test_deterministic_channel_is_reciprocal(scene):
    swapped = scene.model_copy(update={"tx_position_m": scene.rx_position_m, "rx_position_m": scene.tx_position_m})
    objects = [
        object_box(scene, "pedestrian", (12.0, 1.5, 1.0)),
        object_box(scene, "parked_car", (-30.0, 13.0, 1.0)),
    ]
    forward = trace_all(scene, objects, RcsSource.deterministic(), include_lampposts=True)
    backward = trace_all(swapped, objects, RcsSource.deterministic(), include_lampposts=True)
    assert len(forward) == len(backward)
    for a, b in zip(forward, backward):
        assert a.kind == b.kind
        assert b.path_loss_db == pytest.approx(a.path_loss_db, abs=1e-9)
        assert b.delay_s == pytest.approx(a.delay_s, rel=1e-12)


def test_trace_all_lists_every_path(scene, rng):
    objects = [object_box(scene, "pedestrian", (float(x), 15.0, 1.0)) for x in (-10, 0, 10)]
    paths = trace_all(scene, objects, RcsSource.quasi(LAW), rng, include_lampposts=True)
    kinds = [p.kind for p in paths]
    assert kinds[:4] == ["los", "ground_reflection", "wall_reflection", "wall_reflection"]
    assert kinds.count("scatter") == 3 + scene.lamppost.count
    assert [p.object_id for p in paths[4:7]] == ["pedestrian-0", "pedestrian-1", "pedestrian-2"]


def test_paths_csv(tmp_path, scene):
    paths = trace_all(scene, [object_box(scene, "pedestrian", (5.0, 1.0, 1.0))], RcsSource.deterministic())
    out = write_paths_csv(paths, tmp_path / "paths.csv")
    frame = pd.read_csv(out)
    assert list(frame.columns) == [
        "kind", "object_id", "r1", "r2", "delay_ns", "excess_delay_ns", "path_loss_db", "sigma_dbsm"
    ]
    assert frame.loc[0, "kind"] == "los"
    assert frame.loc[0, "path_loss_db"] == pytest.approx(90.39, abs=0.01)
    assert frame["excess_delay_ns"].iloc[1:].gt(0).all()
