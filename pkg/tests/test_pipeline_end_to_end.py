"""
End-to-end pipeline tests on synthetic populations with known chain labels
"""
import pandas as pd
import pytest

from tripchain.core.config import build_study_config
from tripchain.core.error_handling import StageError
from tripchain.models.scenario import ScenarioSpec
from tripchain.services.ingest_service import load_city_definition, IngestService
from tripchain.services.pipeline_service import PipelineService, analyze_user, run_pipeline
from tripchain.services.report_service import sha256_file
from tripchain.services.synth_service import generate_population

MIXTURE = {"A": 0.3, "A-B-A": 0.3, "A-B-C-A": 0.2, "A-B-A-C": 0.1, "*-A-B": 0.1}


@pytest.fixture
def corpus(tmp_path):
    spec = ScenarioSpec.model_validate({
        "seed": 2019,
        "n_users": 24,
        "days_per_user": {3: 0.5, 5: 0.5},
        "mixture": MIXTURE,
        "ping_pong_rate": 0.3,
    })
    return generate_population(spec, out_dir=tmp_path / "corpus").paths


def read(path):
    return pd.read_csv(path, dtype=str, keep_default_na=False)


@pytest.mark.slow
class TestEndToEnd:
    """Synthetic corpus through every stage"""

    def test_labels_match_ground_truth(self, corpus, tmp_path):
        out = tmp_path / "out"
        run_pipeline(build_study_config(), corpus["records"], corpus["city"], out)

        truth = read(corpus["ground_truth"])
        hybrid = read(out / "chains_hybrid.csv").merge(truth, on=["user_id", "date"], how="outer", indicator=True)
        assert (hybrid["_merge"] == "both").all()
        assert (hybrid["label"] == hybrid["true_label"]).all()
        assert (hybrid["n_aps"] == hybrid["true_n"]).all()

        intra = read(out / "chains_intra.csv").merge(truth, on=["user_id", "date"])
        assert (intra["label"] == intra["true_label"]).all()
        assert not intra["label"].str.contains(r"\*").any()
        assert len(intra) == (~truth["true_label"].str.contains(r"\*")).sum()

    def test_expected_outputs(self, corpus, tmp_path):
        out = tmp_path / "out"
        manifest = run_pipeline(build_study_config(), corpus["records"], corpus["city"], out)
        expected = {
            "observation_days.csv", "anchors.csv", "chains_hybrid.csv", "chains_intra.csv",
            "ranking_hybrid.csv", "ranking_intra.csv",
            "transitions_frequency.csv", "transitions_probability.csv",
            "transitions_by_n_frequency.csv", "transitions_by_n_probability.csv",
            "metrics_degree.csv", "metrics_distance.csv", "metrics_values.csv", "metrics_summary.txt",
            "ap_count_pmf.csv", "lognormal_fit.txt", "hotspot.asc", "hotspot.georef",
        }
        assert set(manifest.outputs) == expected
        assert manifest.counts["users_kept"] == 24
        assert manifest.counts["chains_hybrid"] == manifest.counts["user_days"]

        ranking = read(out / "ranking_hybrid.csv")
        assert set(ranking["label"]) <= set(MIXTURE)
        assert sum(float(s) for s in ranking["share"]) == pytest.approx(1.0, abs=1e-5)

    def test_output_schemas(self, corpus, tmp_path):
        out = tmp_path / "out"
        run_pipeline(build_study_config(), corpus["records"], corpus["city"], out)
        chain_columns = ["user_id", "date", "mode", "label", "category", "n_aps", "n_edges", "degree", "avg_distance_km"]
        for mode in ("hybrid", "intra"):
            chains = read(out / f"chains_{mode}.csv")
            assert list(chains.columns) == chain_columns
            assert set(chains["mode"]) == {mode}
        anchors = read(out / "anchors.csv")
        for column in ("user_id", "ap_id", "seed_tower", "lon", "lat", "total_stay_s", "member_count"):
            assert column in anchors.columns
        assert (anchors["member_count"].astype(int) >= 1).all()

    def test_manifest_digests_verify(self, corpus, tmp_path):
        out = tmp_path / "out"
        manifest = run_pipeline(build_study_config(), corpus["records"], corpus["city"], out)
        for name, digest in manifest.outputs.items():
            assert sha256_file(out / name) == digest
        assert manifest.inputs["records"] == sha256_file(corpus["records"])

        text = (out / "manifest.txt").read_text(encoding="utf-8")
        assert f"output.chains_hybrid.csv = {manifest.outputs['chains_hybrid.csv']}" in text
        assert "config.roaming_distance_m = 500.0" in text

    def test_deterministic_across_workers_and_reruns(self, corpus, tmp_path):
        config = build_study_config()
        single = run_pipeline(config, corpus["records"], corpus["city"], tmp_path / "one", workers=1)
        again = run_pipeline(config, corpus["records"], corpus["city"], tmp_path / "again", workers=1)
        pooled = run_pipeline(config, corpus["records"], corpus["city"], tmp_path / "two", workers=2)
        wide = run_pipeline(config, corpus["records"], corpus["city"], tmp_path / "eight", workers=8)
        assert single.outputs == again.outputs == pooled.outputs == wide.outputs

    def test_per_day_anchor_scope(self, corpus, tmp_path):
        out = tmp_path / "out"
        run_pipeline(build_study_config({"ap_scope": "user_day"}), corpus["records"], corpus["city"], out)
        truth = read(corpus["ground_truth"])
        hybrid = read(out / "chains_hybrid.csv").merge(truth, on=["user_id", "date"])
        assert (hybrid["label"] == hybrid["true_label"]).all()
        anchors = read(out / "anchors.csv")
        assert (anchors["date"] != "").all()


class TestStages:

    def test_analyze_user_is_order_free(self, corpus):
        config = build_study_config()
        ingest = IngestService(config, load_city_definition(corpus["city"])).load(corpus["records"])
        traces = [t for t in ingest.user_days if t.user_id == "u000003"]
        forward = analyze_user("u000003", traces, config)
        backward = analyze_user("u000003", list(reversed(traces)), config)
        assert sorted((c.date, c.label) for c in forward.hybrid) == sorted((c.date, c.label) for c in backward.hybrid)

    def test_empty_input_fails_in_ingest(self, tmp_path, city_file):
        records = tmp_path / "records.csv"
        records.write_text("user_id,date,start_time,end_time,lon,lat,tower_id\n", encoding="utf-8")
        with pytest.raises(StageError) as exc_info:
            PipelineService(build_study_config(), tmp_path / "out").run(records, city_file)
        error = exc_info.value
        assert error.stage == "ingest"
        assert error.details["exception_type"] == "InputFormatError"


# Thirteen intra-city types with a heavy head, the shape of observed tourist chain rankings
THIRTEEN_TYPES = {
    "A": 0.30, "A-B-A": 0.20, "A-B": 0.10, "A-B-C-A": 0.07, "A-B-C": 0.06,
    "A-B-A-C": 0.05, "A-B-C-B": 0.04, "A-B-C-D-A": 0.04, "A-B-A-B": 0.03,
    "A-B-C-D": 0.03, "A-B-C-A-D": 0.03, "A-B-A-C-A": 0.03, "A-B-C-B-A": 0.02,
}


@pytest.mark.slow
class TestLargePopulationRecovery:
    """About 10^5 user-days drawn from a thirteen-type mixture"""

    @pytest.mark.parametrize("ping_pong_rate,min_agreement", [(0.0, 1.0), (0.3, 0.999)])
    def test_shares_and_labels_recovered(self, tmp_path, ping_pong_rate, min_agreement):
        spec = ScenarioSpec.model_validate({
            "seed": 20190501,
            "n_users": 33_334,
            "days_per_user": {3: 1.0},
            "mixture": THIRTEEN_TYPES,
            "ping_pong_rate": ping_pong_rate,
        })
        paths = generate_population(spec, out_dir=tmp_path / "corpus", workers=4).paths
        out = tmp_path / "out"
        manifest = run_pipeline(build_study_config(), paths["records"], paths["city"], out, workers=4)
        assert manifest.counts["user_days"] == 100_002

        truth = read(paths["ground_truth"])
        chains = read(out / "chains_intra.csv").merge(truth, on=["user_id", "date"], how="right")
        agreement = (chains["label"] == chains["true_label"]).mean()
        assert agreement >= min_agreement

        ranking = read(out / "ranking_intra.csv")
        shares = dict(zip(ranking["label"], ranking["share"].astype(float)))
        for label, share in THIRTEEN_TYPES.items():
            assert shares.get(label, 0.0) == pytest.approx(share, abs=0.01)
        assert set(ranking.loc[ranking["significant"] == "true", "label"]) == set(THIRTEEN_TYPES)
