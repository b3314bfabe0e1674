import os

import numpy as np
import pytest

from smoothcontact.contact import BarrierParams, ContactFormulation, ImlsParams, Kind
from smoothcontact.geometry import line_polyline
from smoothcontact.inverse import Annulus, DesignProblem
from smoothcontact.scenarios import (SlidingBlock, Table, annulus_forward, annulus_inverse,
                                     energy_wall_scan, local_maxima, nts_wedge_scan,
                                     sliding_block, wall_metrics, write_atomic)

FLOOR = line_polyline(0, 10, 10)


def scan_formulation(kind):
    return ContactFormulation(kind, BarrierParams(0.5, 1.0), ImlsParams(1.5))


def test_table_csv_format():
    t = Table(["x", "y"], ["m", "J"], [[0.1, 1 / 3], [np.nan, 2.0]], {"b": "2", "a": "1"})
    lines = t.to_csv().splitlines()
    assert lines == ["# schema: x[m],y[J]", "# a: 1", "# b: 2", "x,y",
                     "0.1,0.3333333333333333", "nan,2.0"]


def test_write_atomic_replaces_and_cleans_up(tmp_path):
    target = tmp_path / "sub" / "out.csv"
    write_atomic(target, "first\n")
    write_atomic(target, "second\n")
    assert target.read_text() == "second\n"
    with pytest.raises(TypeError):
        write_atomic(target, 12345)  # not text: the write fails midway
    assert target.read_text() == "second\n"
    assert os.listdir(target.parent) == ["out.csv"]


def test_local_maxima_plateaus():
    assert local_maxima(np.array([0, 1, 0, 2, 2, 2, 0, 1])).tolist() == [1, 4]
    assert local_maxima(np.array([0.0, 1.0, 1.0])).tolist() == []


def test_ipc_scan_has_walls_at_vertices():
    t = energy_wall_scan(FLOOR, 0.25, scan_formulation(Kind.IPC), 2001)
    m = wall_metrics(t, FLOOR.vertices[:, 0])
    dx = t.column("x")[1] - t.column("x")[0]
    assert m["energy_ratio"] > 1.5
    assert m["n_peaks"] == m["n_vertices"] > 0
    assert m["peak_offset"] <= dx
    assert m["work_error"] < 1e-3


def test_imls_scan_is_flat():
    t = energy_wall_scan(FLOOR, 0.25, scan_formulation(Kind.IMLS), 2001)
    m = wall_metrics(t, FLOOR.vertices[:, 0])
    assert m["tangential_ratio"] < 1e-6
    assert m["n_peaks"] == 0
    assert m["work_error"] < 1e-3


def test_nts_flat_scan_is_constant():
    t = energy_wall_scan(FLOOR, 0.25, scan_formulation(Kind.NTS), 501)
    e = t.column("energy")
    assert np.ptp(e) == 0.0 and not np.any(t.column("f_t"))


def test_nts_wedge_scan_flips_tangential_force():
    t = nts_wedge_scan(0.2, scan_formulation(Kind.NTS), 400)
    x, e, ft = t.column("x"), t.column("energy"), t.column("f_t")
    assert np.ptp(e) < 1e-12 * e.max()
    left, right = ft[x < 0], ft[x > 0]
    assert np.all(np.sign(left) == np.sign(left[0])) and np.all(np.sign(right) == -np.sign(left[0]))
    jump = np.abs(np.diff(ft)).max()
    assert jump > 0.5 * np.abs(ft).max()


def test_scan_work_energy_all_formulations():
    for kind in Kind:
        t = energy_wall_scan(FLOOR, 0.2, scan_formulation(kind), 4001, (2.3, 7.9))
        assert wall_metrics(t, FLOOR.vertices[:, 0])["work_error"] < 1e-3


def test_scan_height_precondition():
    with pytest.raises(ValueError):
        energy_wall_scan(FLOOR, 0.6, scan_formulation(Kind.IPC), 10)


def test_sliding_block_zero_force():
    r = sliding_block("IPC", 0.0, 20)
    assert r.failure is None
    assert np.max(np.abs(r.displacement)) < 1e-6


def test_sliding_block_bytes_are_reproducible():
    a = sliding_block("IMLS", 6.0, 8).table.to_csv()
    b = sliding_block("IMLS", 6.0, 8).table.to_csv()
    assert a == b
    assert "# kappa:" in a and "# resting_gap: 0.01" in a


def test_sliding_block_setup():
    setup = SlidingBlock()
    assert setup.mass == pytest.approx(1000 * 0.04)
    f = setup.forces(6.0)
    assert f[0::2].sum() == pytest.approx(6.0)
    assert setup.free_slide(6.0, 2.0) == pytest.approx(0.5 * 6.0 / 40.0 * 4.0)


def test_annulus_midpoint_formulations_agree():
    model = Annulus()
    theta = 7.5 * model.segment_angle
    r_imls = annulus_forward("IMLS", [theta], model)
    r_ipc = annulus_forward("IPC", [theta], model)
    assert abs(r_imls.errors[0]) < 1e-3 and abs(r_ipc.errors[0]) < 1e-3
    assert abs(r_imls.table.column("theta_A")[0] - r_ipc.table.column("theta_A")[0]) < 1e-3


def test_annulus_forward_records_failures():
    r = annulus_forward("NTS", [0.0, 7.5 * np.pi / 32], Annulus())
    assert len(r.table.data) == 2
    for th, msg in r.failures:
        assert np.isnan(r.errors[r.table.column("theta_B") == th]).all()
        assert "line search" in msg or "singular" in msg


def test_annulus_inverse_table():
    model = Annulus()
    target = 7.5 * model.segment_angle
    result, table = annulus_inverse("IMLS", DesignProblem(target - 0.2, target), model)
    assert table.columns == ["step", "theta_B", "objective"]
    assert table.meta["converged"] == "true"
    assert np.array_equal(table.column("objective"), result.objectives)
