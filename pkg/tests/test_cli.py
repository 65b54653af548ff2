"""
Tests for the command line interface and its exit codes
"""
import pytest

from tripchain.cli import main
from tripchain.core.config import parse_key_value_text
from tripchain.models.scenario import ScenarioSpec
from tripchain.services.report_service import write_pmf
from tripchain.services.stats_service import discretized_lognormal_pmf
from tripchain.services.synth_service import render_scenario

SCENARIO = ScenarioSpec.model_validate({
    "seed": 42,
    "n_users": 8,
    "days_per_user": {3: 1.0},
    "mixture": {"A": 0.6, "A-B-A": 0.3, "A-B": 0.1},
})


@pytest.fixture
def corpus(tmp_path, capsys):
    scenario = tmp_path / "scenario.cfg"
    scenario.write_text(render_scenario(SCENARIO), encoding="utf-8")
    out = tmp_path / "corpus"
    assert main(["synth", "--scenario", str(scenario), "--out", str(out)]) == 0
    capsys.readouterr()
    return out


def stdout_values(capsys):
    return parse_key_value_text(capsys.readouterr().out)


class TestCommands:
    """Subcommands print key = value summaries and exit 0"""

    def test_synth_writes_corpus(self, corpus):
        assert {p.name for p in corpus.iterdir()} == {"records.csv", "ground_truth.csv", "city.geojson", "scenario.cfg"}

    def test_run(self, corpus, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["run", "--input", str(corpus / "records.csv"), "--city", str(corpus / "city.geojson"),
                     "--out", str(out)])
        assert code == 0
        values = stdout_values(capsys)
        assert values["manifest"] == str(out / "manifest.txt")
        assert (out / "manifest.txt").is_file()

    def test_rank(self, corpus, tmp_path, capsys):
        code = main(["rank", "--input", str(corpus / "records.csv"), "--city", str(corpus / "city.geojson"),
                     "--out", str(tmp_path / "out"), "--mode", "hybrid", "--threshold", "0.05"])
        assert code == 0
        values = stdout_values(capsys)
        assert values["chains"] == "24"
        assert set(values["significant"].split(",")) <= {"A", "A-B-A", "A-B"}
        assert (tmp_path / "out" / "ranking_hybrid.csv").is_file()

    def test_fit_from_pmf_file(self, tmp_path, capsys):
        pmf_path = write_pmf(discretized_lognormal_pmf(0.3946, 0.6466, range(1, 16)), tmp_path / "pmf.csv")
        code = main(["fit", "--pmf", str(pmf_path), "--out", str(tmp_path / "out")])
        assert code == 0
        values = stdout_values(capsys)
        assert float(values["mu"]) == pytest.approx(0.3946, abs=0.02)
        assert (tmp_path / "out" / "lognormal_fit.txt").is_file()

    def test_config_file_values_apply(self, corpus, tmp_path, capsys):
        config = tmp_path / "study.cfg"
        config.write_text("significance_share = 0.5\n", encoding="utf-8")
        code = main(["rank", "--config", str(config), "--input", str(corpus / "records.csv"),
                     "--city", str(corpus / "city.geojson"), "--out", str(tmp_path / "out")])
        assert code == 0
        assert stdout_values(capsys)["significant"] in ("", "A")


class TestExitCodes:

    def test_missing_required_flag_is_usage_error(self, tmp_path, capsys):
        assert main(["chains", "--out", str(tmp_path)]) == 2
        assert "missing required flag" in capsys.readouterr().err

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as exc_info:
            main(["run", "--frobnicate"])
        assert exc_info.value.code == 2

    def test_missing_input_is_data_error(self, tmp_path, city_file, capsys):
        code = main(["ingest", "--input", str(tmp_path / "absent.csv"), "--city", str(city_file),
                     "--out", str(tmp_path / "out")])
        assert code == 1
        assert "tripchain: error [IN_" in capsys.readouterr().err

    def test_missing_pmf_file_is_data_error(self, tmp_path, capsys):
        code = main(["fit", "--pmf", str(tmp_path / "absent.csv"), "--out", str(tmp_path / "out")])
        assert code == 1
        assert "tripchain: error [IN_1100]" in capsys.readouterr().err

    def test_invalid_config_is_data_error(self, tmp_path, city_file, capsys):
        config = tmp_path / "study.cfg"
        config.write_text("roaming_distance_m = -5\n", encoding="utf-8")
        code = main(["ingest", "--config", str(config), "--input", str(tmp_path / "r.csv"),
                     "--city", str(city_file)])
        assert code == 1
        assert "[CFG_" in capsys.readouterr().err

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc_info:
            main(["--version"])
        assert exc_info.value.code == 0
        assert "tripchain" in capsys.readouterr().out
