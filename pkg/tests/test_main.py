import pytest

from bounded_quotient.main import main
from bounded_quotient.storage import read_table


def test_bench_lists_registry(capsys):
    assert main(["bench"]) == 0
    out = capsys.readouterr().out
    assert "tiger-full" in out
    assert "witness" in out


def test_bench_describes_one(capsys):
    assert main(["bench", "-b", "gridworld:3", "-T", "2"]) == 0
    out = capsys.readouterr().out
    assert "|S|=9" in out
    assert "histories through T=2: 21" in out


def test_unknown_benchmark_exits_2():
    assert main(["bench", "-b", "nope"]) == 2


def test_negative_epsilon_exits_2(tmp_path):
    assert main(["partition", "-b", "tiger-listen", "--eps", "-1", "--output-dir", str(tmp_path)]) == 2


def test_verify_without_artifacts_exits_1(tmp_path):
    assert main(["verify", "--output-dir", str(tmp_path)]) == 1


def test_invalid_table_choice():
    with pytest.raises(SystemExit):
        main(["table", "no_such_table"])


def test_partition_writes_one_file_per_epsilon(tmp_path, capsys):
    code = main(["partition", "-b", "tiger-listen", "-T", "2", "--eps", "0", "0.5", "--rule", "lt",
                 "--serial", "--output-dir", str(tmp_path)])
    assert code == 0
    files = sorted(tmp_path.glob("partition__*.csv"))
    assert len(files) == 2
    exact = [f for f in files if f.name.endswith("eps0__lt.csv")][0]
    _, metadata = read_table(str(exact))
    assert metadata["classes"] == "7"
    assert "eps=0.5: 3 classes" in capsys.readouterr().out


def test_table_then_verify(tmp_path):
    manifest = tmp_path / "manifest.json"
    manifest.write_text(
        '{"artifacts": [{"file": "latent_planning.csv", "key_columns": ["horizon"],'
        ' "rows": [{"key": {"horizon": 2}, "values": {"value": -2.0}, "tolerance": 1e-9}]}]}'
    )
    assert main(["table", "latent_planning", "--horizons", "2", "--output-dir", str(tmp_path)]) == 0
    assert main(["verify", "--output-dir", str(tmp_path), "--manifest", str(manifest)]) == 0
