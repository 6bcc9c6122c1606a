import json
import math
import subprocess
import sys
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmixlab.bounds import enhanced_rate_factor, trivial_kappa_bound
from pmixlab.lab import (SCHEMA_VERSION, Comparison, ExperimentConfig, PartialReadError,
                         SchemaVersionError, compare_bounds, crossing_time, initial_field, load,
                         measure_kappa, nu_sweep, persist, record_path, store_records,
                         verify_lemma41, write_csv)
from pmixlab.solver import RunRecord

SMALL = dict(d=2, n=32, t_max=1.0, nu_list=(3e-2, 1e-2))


def small(**kw):
    return ExperimentConfig(**{**SMALL, **kw})


# --- configuration ----------------------------------------------------------------


@pytest.mark.parametrize("bad", [dict(nu_list=(1e-3, 1e-2)), dict(nu_list=(1e-2, 1e-2)),
                                 dict(nu_list=()), dict(s_samples=(1.0,)),
                                 dict(s_samples=(0.0, 0.0)), dict(t_max=0.0),
                                 dict(init="gauss"), dict(flow="vortex"), dict(n=30),
                                 dict(d=1, flow="cellular")])
def test_config_rejects(bad):
    with pytest.raises(ValueError):
        small(**bad)


def test_config_dict_round_trip():
    cfg = small(flow="alternating_shear", s_samples=(0.0, 0.5), kmax=3)
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"nonsense": 1})


def test_cadence_rule():
    cfg = small()
    assert cfg.cadence_for(1e-2) == pytest.approx(min(0.02, trivial_kappa_bound(1e-2, 3) / 200))
    assert small(cadence=1e-4).cadence_for(1e-2) == 1e-4


# --- crossing detection -------------------------------------------------------------


def test_crossing_interpolates_squared_norm():
    t = [0.0, 1.0, 2.0]
    l2 = [1.0, math.sqrt(0.5), math.sqrt(0.1)]
    # squared norms 1, 0.5, 0.1; threshold^2 = 0.3 is half way through the second interval
    assert crossing_time(t, l2, math.sqrt(0.3)) == pytest.approx(1.5)
    assert crossing_time(t, l2, 0.01) is None
    assert crossing_time(t, l2, 2.0) == 0.0


@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=30), st.floats(0.05, 0.95))
def test_crossing_lies_in_the_bracketing_interval(decr, thr):
    l2 = np.cumprod(np.r_[1.0, 1 - 0.5 * np.array(decr)])
    t = np.arange(l2.size, dtype=float)
    c = crossing_time(t, l2, thr)
    hit = np.nonzero(l2 <= thr)[0]
    if hit.size == 0:
        assert c is None
    else:
        k = hit[0]
        assert (t[k - 1] if k else t[0]) <= c <= t[k]


# --- dissipation time ----------------------------------------------------------------


def test_measured_kappa_below_trivial_bound_zero_flow():
    cfg = ExperimentConfig(d=1, n=128, t_max=2.0, nu_list=(1e-2,))
    (m,) = measure_kappa(cfg)
    assert not m.lower_bound
    assert m.kappa <= 1.05 * trivial_kappa_bound(1e-2, 3)


def test_zero_initial_data_is_flagged():
    (m,) = measure_kappa(small(init="zero", nu_list=(1e-2,)))
    assert m.kappa is None and "degenerate-initial-data" in m.flags


def test_unreached_threshold_gives_lower_bound():
    (m,) = measure_kappa(small(nu_list=(1e-3,), t_max=0.05))
    assert m.lower_bound and m.kappa == 0.05
    assert "threshold-not-reached" in m.flags


def test_start_time_samples_continue_the_first_run():
    cfg = small(flow="alternating_shear", s_samples=(0.5, 0.0), nu_list=(1e-2,))
    (m,) = measure_kappa(cfg)
    per = {e["s"]: e for e in m.per_s}
    assert per[0.0]["norm0"] == pytest.approx(1.0)
    assert per[0.5]["norm0"] < 1.0
    assert m.kappa == max(e["crossing"] for e in m.per_s)


def test_workers_do_not_change_results():
    cfg = small(flow="alternating_shear")
    a = [m.to_dict() for m in measure_kappa(cfg, workers=1)]
    b = [m.to_dict() for m in measure_kappa(cfg, workers=2)]
    assert a == b


def test_threshold_never_recrossed_upward():
    cfg = small(flow="alternating_shear", nu_list=(1e-2,), t_max=1.0)
    (m,) = measure_kappa(cfg)
    rec = m.records[0]
    thr = m.per_s[0]["threshold"]
    below = np.array(rec.l2) <= thr
    if below.any():
        assert below[np.argmax(below):].all()


# --- sweeps --------------------------------------------------------------------------


def test_single_nu_sweep_rejects_fit_but_keeps_table():
    sw = nu_sweep(small(nu_list=(3e-2,)))
    assert sw.slope is None and len(sw.rows) == 1
    assert any("fit rejected" in w for w in sw.warnings)


def test_sweep_excludes_unreached_points():
    cfg = small(nu_list=(3e-2, 1e-2, 1e-4), t_max=1.5)
    with pytest.warns(RuntimeWarning, match="excluded"):
        sw = nu_sweep(cfg)
    assert [r["reached"] for r in sw.rows] == [True, True, False]
    assert sw.slope is not None


def test_zero_flow_sweep_slope_is_minus_one():
    cfg = ExperimentConfig(d=1, n=128, t_max=6.0, nu_list=(1e-2, 3e-3, 1e-3))
    sw = nu_sweep(cfg)
    assert sw.slope == pytest.approx(-1.0, abs=0.05)
    assert sw.ci95[0] <= sw.slope <= sw.ci95[1] and sw.r2 > 0.99


# --- comparisons ----------------------------------------------------------------------


def test_compare_bounds_round_trip_and_grid_check():
    cfg = small(flow="alternating_shear")
    sw = nu_sweep(cfg)
    reps = {"strong": [None, None], "weak": [None, None]}
    cmp = compare_bounds(sw, reps)
    assert Comparison.from_dict(json.loads(json.dumps(cmp.to_dict()))) == cmp
    assert all(r["within_trivial"] for r in cmp.rows)
    tiny = enhanced_rate_factor(cfg.bound_inputs(1e-300, 1.0), "strong")
    with pytest.raises(ValueError):
        compare_bounds(sw, {"strong": [tiny, None]})


def test_strong_rate_factor_below_trivial_for_small_nu():
    # amplitude 1/(2 pi) gives ||grad u||_inf = 1, active within float range
    cfg = small(flow="alternating_shear", amplitude=1 / (2 * math.pi), rate_law="power",
                rate_params=(1.0, 1.0))
    inp = cfg.bound_inputs(1e-300, 1.0)
    rep = enhanced_rate_factor(inp, "strong")
    assert rep.active and rep.effective <= rep.trivial


# --- transport comparison -------------------------------------------------------------


def test_lemma41_vanishing_viscosity_distance():
    dists = []
    for nu in (1e-4, 1e-6, 1e-8):
        rep = verify_lemma41(small(flow="alternating_shear", nu_list=(nu,)), horizon=0.5, every=0.1)
        assert rep.passed and min(rep.bound[1:]) > 0
        dists.append(max(rep.distance_sq))
    assert dists[0] > dists[1] > dists[2] and dists[2] < 1e-9


def test_lemma41_reports_control_and_growth():
    cfg = small(flow="alternating_shear", nu_list=(1e-3,))
    rep = verify_lemma41(cfg, horizon=1.0, every=0.1)
    assert rep.passed and rep.growth_passed
    assert len(rep.times) == len(rep.distance_sq) == len(rep.control_bound)
    assert json.dumps(rep.to_dict())


# --- run store ------------------------------------------------------------------------


def _record():
    cfg = small(flow="alternating_shear", nu_list=(1e-2,))
    return measure_kappa(cfg)[0].records[0]


def test_persist_load_identity(tmp_path):
    rec = _record()
    path = persist(rec, tmp_path / "a.jsonl")
    assert load(path) == rec


def test_record_path_layout(tmp_path):
    p = record_path(tmp_path, "exp", 1e-3, 0.5)
    assert p == tmp_path / "exp" / "0.001" / "0.5.jsonl"


def test_truncated_file_reports_line(tmp_path):
    path = persist(_record(), tmp_path / "a.jsonl")
    lines = path.read_text().split("\n")
    path.write_text("\n".join(lines[:4]) + "\n")
    with pytest.raises(PartialReadError, match="line 5") as info:
        load(path)
    assert info.value.line == 5
    path.write_text("\n".join(lines[:3]) + "\n" + lines[3][:7])
    with pytest.raises(PartialReadError, match="line 4"):
        load(path)


def test_schema_version_mismatch(tmp_path):
    path = persist(_record(), tmp_path / "a.jsonl")
    text = path.read_text().replace(f'"schema_version": {SCHEMA_VERSION}', '"schema_version": 99')
    path.write_text(text)
    with pytest.raises(SchemaVersionError, match="99"):
        load(path)


def test_csv_projection(tmp_path):
    rec = _record()
    path = write_csv(rec, tmp_path / "a.csv")
    rows = path.read_text().strip().split("\n")
    assert rows[0] == ",".join(RunRecord.SERIES)
    assert len(rows) == len(rec.times) + 1
    assert float(rows[1].split(",")[1]) == rec.l2[0]


def test_store_records_layout(tmp_path):
    cfg = small(flow="alternating_shear", s_samples=(0.0, 0.5))
    paths = store_records(tmp_path, cfg, measure_kappa(cfg))
    assert len(paths) == 4 and all(p.exists() for p in paths)
    assert {p.parent.name for p in paths} == {"0.03", "0.01"}


_SCRIPT = """
import sys
from pmixlab.lab import ExperimentConfig, measure_kappa, persist
cfg = ExperimentConfig(d=2, n=32, t_max=1.0, nu_list=(1e-2,), flow="alternating_shear",
                       init="random", seed=int(sys.argv[2]))
persist(measure_kappa(cfg)[0].records[0], sys.argv[1])
"""


def test_determinism_across_processes(tmp_path):
    outs = []
    for k, seed in enumerate((5, 5, 6)):
        path = tmp_path / f"{k}.jsonl"
        subprocess.run([sys.executable, "-c", _SCRIPT, str(path), str(seed)], check=True)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0] != outs[2]


def test_initial_field_kinds():
    assert initial_field(small()).l2() == pytest.approx(1.0)
    r = initial_field(small(init="random", seed=3))
    assert r.l2() == pytest.approx(1.0)
    assert np.array_equal(r.values, initial_field(small(init="random", seed=3)).values)
    assert initial_field(small(init="zero")).l2() == 0.0
