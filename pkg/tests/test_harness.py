import math

import pytest

from rsma_istn.harness import (
    CSV_VERSION,
    FIELDS,
    ExperimentPlan,
    PlanError,
    ReportError,
    any_unclean,
    fig2_plan,
    fig3_plan,
    load_plan,
    plan_from_mapping,
    read_csv,
    report,
    run_plan,
    summarize,
    to_csv_text,
)
from rsma_istn.scenario import ScenarioConfig
from rsma_istn.schemes import SDMA_ISTN, SRSMA_ISTN


def _small_plan(**kw):
    kw.setdefault("values", (500.0,))
    kw.setdefault("schemes", (SDMA_ISTN,))
    kw.setdefault("n_trials", 3)
    return ExperimentPlan(**kw)


@pytest.fixture(scope="module")
def small_rows():
    return run_plan(_small_plan())


def test_row_counts(small_rows):
    detail = [r for r in small_rows if r.kind == "detail"]
    means = [r for r in small_rows if r.kind == "mean"]
    assert len(detail) == 3 and len(means) == 1
    assert [r.trial for r in detail] == [0, 1, 2]
    assert means[0].mmf == pytest.approx(sum(r.mmf for r in detail) / 3, rel=1e-15)
    assert means[0].clean == all(r.clean for r in detail)


def test_csv_header_and_schema(small_rows):
    text = to_csv_text(small_rows)
    lines = text.splitlines()
    assert lines[0].startswith(f"# {CSV_VERSION} axis=h_sat_km")
    header = lines[1].split(",")
    assert header == [f for f in FIELDS if f != "wall_time"]
    assert "wall_time" in to_csv_text(small_rows, include_wall_time=True).splitlines()[1]
    assert len(lines) == 2 + len(small_rows)


def test_same_plan_twice_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_plan(_small_plan(output=str(a), n_trials=2))
    run_plan(_small_plan(output=str(b), n_trials=2))
    assert a.read_bytes() == b.read_bytes()


def test_worker_pool_preserves_order(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_plan(_small_plan(output=str(a), values=(300.0, 2000.0), n_trials=2))
    run_plan(_small_plan(output=str(b), values=(300.0, 2000.0), n_trials=2, workers=2))
    assert a.read_bytes() == b.read_bytes()


def test_common_random_numbers_across_schemes():
    rows = run_plan(_small_plan(schemes=(SDMA_ISTN, SRSMA_ISTN), n_trials=2))
    detail = [r for r in rows if r.kind == "detail"]
    # warm-start chain on a shared realization: sRSMA never loses to SDMA
    for t in (0, 1):
        by = {r.scheme: r for r in detail if r.trial == t}
        assert by[SRSMA_ISTN].mmf >= by[SDMA_ISTN].mmf - 1e-4


def test_plan_validation():
    with pytest.raises(PlanError):
        ExperimentPlan(axis="elevation")
    with pytest.raises(PlanError):
        ExperimentPlan(n_trials=0)
    with pytest.raises(PlanError):
        ExperimentPlan(values=())
    with pytest.raises(PlanError):
        ExperimentPlan(values=(500.0, 300.0))
    with pytest.raises(PlanError):
        ExperimentPlan(csit_error_levels=(0.05, 0.0))
    with pytest.raises(PlanError):
        ExperimentPlan(csit_error_levels=(-0.1,))
    with pytest.raises(ValueError):
        ExperimentPlan(schemes=("NOMA",))


def test_cell_config():
    p = fig3_plan()
    cfg = p.cell_config(40.0, 0.05)
    assert cfg.p_bs_dbm == pytest.approx(40.0)
    assert cfg.sat_altitude_m == 500e3 and cfg.csit_error_var == 0.05
    assert p.csit_error_levels == (0.0, 0.01, 0.05)
    assert fig2_plan().cell_config(2000.0, 0.0).sat_altitude_m == 2000e3


def test_plan_from_mapping_and_yaml(tmp_path):
    plan = plan_from_mapping({"scenario": {"p_bs_dbm": 40}, "sweep": {"axis": "h_sat_km", "values": [300, 500]},
                              "n_trials": 2, "schemes": ["sdma-istn"]})
    assert plan.values == (300.0, 500.0) and plan.schemes == (SDMA_ISTN,)
    assert plan.base.p_bs_dbm == pytest.approx(40.0)
    with pytest.raises(PlanError):
        plan_from_mapping({"trials": 3})
    path = tmp_path / "plan.yaml"
    path.write_text("scenario:\n  rng_seed: 7\naxis: p_t_dbm\nvalues: [20, 30]\nn_trials: 1\n")
    plan = load_plan(path, {"rng_seed": 9})
    assert plan.axis == "p_t_dbm" and plan.base.rng_seed == 9


def test_report_roundtrip(tmp_path, small_rows):
    path = tmp_path / "res.csv"
    path.write_text(to_csv_text(small_rows))
    out = report(path)
    assert out["axis"] == "h_sat_km"
    (row,) = out["summary"]
    detail = [r for r in small_rows if r.kind == "detail"]
    assert row["mean_mmf"] == pytest.approx(sum(r.mmf for r in detail) / 3, rel=1e-14)
    assert row["n"] == 3
    assert out["paths"]["summary"].read_text().splitlines()[0] == "h_sat_km,scheme,csit_error_var,mean_mmf,std_mmf,n"
    assert out["paths"]["spc_fraction"].exists()


def test_report_empty_table(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text(to_csv_text([]))
    out = report(path)
    assert out["summary"] == [] and out["spc_fraction"] == []
    empty = tmp_path / "blank.csv"
    empty.write_text("")
    assert report(empty)["summary"] == []


def test_report_single_row(tmp_path, small_rows):
    path = tmp_path / "one.csv"
    path.write_text(to_csv_text(small_rows[:1]))
    (row,) = report(path)["summary"]
    assert row["mean_mmf"] == small_rows[0].mmf and row["std_mmf"] == 0.0


def test_malformed_csv_reports_line(tmp_path, small_rows):
    lines = to_csv_text(small_rows).splitlines()
    bad = list(lines)
    bad[3] = bad[3].replace(",", ";", 2)
    path = tmp_path / "bad.csv"
    path.write_text("\n".join(bad) + "\n")
    with pytest.raises(ReportError, match="line 4"):
        read_csv(path)
    bad = list(lines)
    cols = bad[4].split(",")
    cols[lines[1].split(",").index("mmf")] = "abc"
    bad[4] = ",".join(cols)
    path.write_text("\n".join(bad) + "\n")
    with pytest.raises(ReportError, match="line 5"):
        read_csv(path)
    path.write_text("# something-else/1\nkind\n")
    with pytest.raises(ReportError, match="line 1"):
        read_csv(path)


def test_unclean_detection(small_rows):
    assert not any_unclean(small_rows)
    assert any_unclean([{"clean": "0"}])


def test_summary_std_population():
    rows = [{"kind": "detail", "scheme": SDMA_ISTN, "h_sat_km": 500.0, "csit_error_var": 0.0, "mmf": v}
            for v in (1.0, 3.0)]
    (s,), spc = summarize(rows, "h_sat_km")
    assert s["mean_mmf"] == 2.0 and s["std_mmf"] == 1.0 and spc == []
    assert math.isfinite(s["std_mmf"])


def test_base_config_is_default():
    assert ExperimentPlan().base == ScenarioConfig()
