import os

import pytest

from bounded_quotient.errors import ConfigError
from bounded_quotient.schemas import FamilySpec, RunConfig
from bounded_quotient.storage import read_table, write_table
from bounded_quotient.tables import (
    TABLES,
    belief_sensitivity,
    default_manifest,
    latent_planning,
    run_table,
    tables_for_profile,
    verify_artifacts,
)


@pytest.fixture
def config(tmp_path):
    return RunConfig(horizons=[2], output_dir=str(tmp_path), serial=True)


def test_unknown_table(config):
    with pytest.raises(ConfigError, match="unknown table"):
        run_table("nope", config)


def test_probe_family_comparison_artifact(config, tmp_path):
    path = run_table("probe_family_comparison", config)
    frame, metadata = read_table(path)
    assert metadata["table"] == "probe_family_comparison"
    assert metadata["seed"] == "7"
    row = frame.iloc[0]
    assert row["op_classes"] == 4
    assert row["clk_classes"] == 4
    assert row["delta_clk"] == pytest.approx(0.0, abs=1e-9)
    assert row["mirror_distance"] == pytest.approx(0.49, abs=1e-9)
    assert "op_time" not in frame.columns
    assert os.path.exists(tmp_path / "probe_family_comparison_timings.csv")


def test_serial_artifact_is_reproducible(config, tmp_path):
    first = open(run_table("probe_family_comparison", config)).read()
    second = open(run_table("probe_family_comparison", config)).read()
    assert first == second


def test_empty_epsilon_list_writes_header_only(config):
    path = run_table("noise_sensitivity", config.model_copy(update={"epsilons": []}))
    frame, _ = read_table(path)
    assert frame.empty
    assert list(frame.columns) == list(TABLES["noise_sensitivity"].columns)


def test_latent_planning_rows(config):
    rows = latent_planning(config)
    assert len(rows) == 1
    assert rows[0]["value"] == pytest.approx(-2.0)
    assert rows[0]["first_action_value"] == pytest.approx(-2.0)


def test_belief_sensitivity(tiger):
    rows = belief_sensitivity(tiger, [[0.1, 0.9], [0.3, 0.7]], [0.3], FamilySpec(), 2)
    by_index = {row["index"]: row for row in rows}
    assert by_index[0]["classes"] == 3
    assert by_index[0]["ari"] == pytest.approx(0.889, abs=1e-3)
    assert by_index[1]["ari"] == pytest.approx(1.0)


def _manifest(value, tolerance=1e-6):
    return {"artifacts": [{
        "file": "toy.csv",
        "key_columns": ["k"],
        "rows": [{"key": {"k": 1}, "values": {"v": value}, "tolerance": tolerance}],
    }]}


def test_verify_artifacts(tmp_path):
    write_table(str(tmp_path / "toy.csv"), [{"k": 1, "v": 0.5}, {"k": 2, "v": 0.75}], ["k", "v"])

    report = verify_artifacts(str(tmp_path), _manifest(0.5))
    assert report.passed
    assert report.checked == 1

    tampered = verify_artifacts(str(tmp_path), _manifest(0.6))
    assert not tampered.passed
    assert "expected 0.6" in tampered.failures[0]

    os.remove(tmp_path / "toy.csv")
    missing = verify_artifacts(str(tmp_path), _manifest(0.5))
    assert missing.failures == ["toy.csv: missing"]


def test_verify_detects_schema_drift(tmp_path):
    write_table(str(tmp_path / "toy.csv"), [{"k": 1, "w": 0.5}], ["k", "w"])
    report = verify_artifacts(str(tmp_path), _manifest(0.5))
    assert "schema drift" in report.failures[0]


def test_default_manifest_names_registered_tables():
    files = {artifact["file"] for artifact in default_manifest()["artifacts"]}
    assert files <= {f"{table_id}.csv" for table_id in TABLES}


def test_default_manifest_pins_family_columns_separately():
    artifacts = {artifact["file"]: artifact for artifact in default_manifest()["artifacts"]}
    comparison = {row["key"]["horizon"]: row["values"] for row in artifacts["probe_family_comparison.csv"]["rows"]}
    assert comparison[4]["delta_clk"] == pytest.approx(0.98)
    assert comparison[4]["mirror_distance"] == pytest.approx(1.3154)
    agreement = {row["key"]["k"]: row["values"] for row in artifacts["partition_agreement.csv"]["rows"]}
    assert agreement[1]["delta_s"] == pytest.approx(0.98)
    assert agreement[3]["delta_s"] == pytest.approx(0.245)
    assert agreement[5] == {"delta_s": 0.0, "ari": 1.0}


def test_hierarchical_scaling_reports_stitched_residual(tmp_path):
    config = RunConfig(horizons=[8], epsilons=[0.5], output_dir=str(tmp_path), serial=True)
    frame, _ = read_table(run_table("hierarchical_scaling", config))
    assert list(frame["layer"]) == [1, 2]
    second = frame.iloc[1]
    assert second["residual"] > 0
    assert second["residual"] == pytest.approx(frame.iloc[0]["gamma"], abs=1e-6)
    assert bool(second["holds"])


def test_tables_for_profile():
    quick = tables_for_profile("quick")
    assert "probe_family_comparison" in quick
    assert "value_bounds" not in quick
    assert tables_for_profile("full") == list(TABLES)
