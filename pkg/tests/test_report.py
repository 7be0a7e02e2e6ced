import json
import math

import numpy as np
import pytest

from emossl.emotion_space import avd_rmse_by_emotion
from emossl.report import (
    MetricReport,
    UtteranceRow,
    format_metric,
    render_avd_table,
    render_language_table,
    render_report,
)

EN_LABELS = ("Angry", "Happy", "Sad", "Surprise")

# per-emotion AVD RMSE targets for the English fixture; their mean prints 0.0773
EN_AVD_TARGETS = {"Angry": 0.0837, "Happy": 0.0658, "Sad": 0.0757, "Surprise": 0.0839}


def make_report(rows, labels=EN_LABELS, config=None):
    report = MetricReport(labels=labels, config=config or {"fixture": True})
    for row in rows:
        report.add_row(row)
    return report


def wer_fixture_report():
    # 80 per-utterance WER values averaging exactly 19.58
    rows = []
    for i in range(80):
        value = 19.08 if i % 2 == 0 else 20.08
        rows.append(UtteranceRow(f"en_{i:03d}", "en", EN_LABELS[i % 4], {"wer": value}))
    return make_report(rows)


class TestLanguageTable:
    def test_wer_row_prints_reference_english_value(self):
        report = wer_fixture_report()
        agg = report.language_aggregates()["en"]
        assert agg["metrics"]["wer"] == pytest.approx(19.58, abs=1e-9)
        rendered = render_language_table(report)
        assert "19.58" in rendered
        assert "WER(%)" in rendered

    def test_mcd_row_prints_reference_english_value(self):
        rows = [
            UtteranceRow(f"u{i}", "en", EN_LABELS[i % 4],
                         {"mcd": 7.182 if i % 2 == 0 else 7.382})
            for i in range(40)
        ]
        report = make_report(rows)
        assert report.language_aggregates()["en"]["metrics"]["mcd"] == pytest.approx(
            7.282, abs=1e-9
        )
        assert "7.282" in render_language_table(report)

    def test_missing_metric_renders_dash(self):
        rows = [
            UtteranceRow("a", "en", "Angry", {"wer": 10.0, "mcd": 5.0}),
            UtteranceRow("b", "ja", "Happy", {"wer": 12.0}),
        ]
        rendered = render_language_table(make_report(rows))
        ja_line = [l for l in rendered.splitlines() if l.startswith("ja")][0]
        assert "-" in ja_line


class TestAvdTable:
    def avd_report(self):
        rows = []
        for emotion, target in EN_AVD_TARGETS.items():
            for i in range(20):
                # per-utterance rmse == per-emotion pooled value when constant
                rows.append(
                    UtteranceRow(f"{emotion}_{i}", "en", emotion, {"avd_rmse": target})
                )
        return make_report(rows)

    def test_average_column_prints_0_0773(self):
        report = self.avd_report()
        per_emotion, avg = report.avd_emotion_table()["en"]
        assert avg == pytest.approx(0.077275, abs=1e-12)
        rendered = render_avd_table(report)
        assert "0.0773" in rendered
        for value in ("0.0837", "0.0658", "0.0757", "0.0839"):
            assert value in rendered

    def test_columns_follow_declared_label_order(self):
        rendered = render_avd_table(self.avd_report())
        header = rendered.splitlines()[0]
        assert header.split() == ["lang", "Avg", "Angry", "Happy", "Sad", "Surprise"]

    def test_six_emotion_japanese_header(self):
        labels = ("Angry", "Happy", "Sad", "Surprise", "Disgust", "Fear")
        rows = [
            UtteranceRow(f"ja_{e}", "ja", e, {"avd_rmse": 0.05 + 0.01 * i})
            for i, e in enumerate(labels)
        ]
        rendered = render_avd_table(make_report(rows, labels=labels))
        header = rendered.splitlines()[0].split()
        assert header == ["lang", "Avg", "Angry", "Happy", "Sad", "Surprise", "Disgust", "Fear"]

    def test_pooled_aggregation_matches_emotion_space_op(self):
        rng = np.random.default_rng(61)
        pairs = []
        rows = []
        for i in range(50):
            emotion = EN_LABELS[int(rng.integers(4))]
            hyp = rng.uniform(-1, 1, 3)
            ref = rng.uniform(-1, 1, 3)
            pairs.append((emotion, tuple(hyp), tuple(ref)))
            per_utt = math.sqrt(float(((hyp - ref) ** 2).sum()) / 3.0)
            rows.append(UtteranceRow(f"u{i}", "en", emotion, {"avd_rmse": per_utt}))
        report = make_report(rows)
        per_emotion, avg = report.avd_emotion_table()["en"]
        oracle_map, oracle_avg = avd_rmse_by_emotion(pairs)
        for emotion, value in oracle_map.items():
            assert per_emotion[emotion] == pytest.approx(value, abs=1e-12)
        assert avg == pytest.approx(oracle_avg, abs=1e-12)


class TestRoundTrip:
    def test_jsonl_aggregates_recomputable(self, tmp_path):
        rng = np.random.default_rng(67)
        rows = []
        for i in range(30):
            metrics = {"wer": float(rng.uniform(5, 40))}
            if i % 2 == 0:
                metrics["mcd"] = float(rng.uniform(4, 9))
            if i % 3 == 0:
                metrics["avd_rmse"] = float(rng.uniform(0.01, 0.2))
            rows.append(
                UtteranceRow(f"u{i:02d}", "en" if i % 2 else "ja", EN_LABELS[i % 4], metrics)
            )
        report = make_report(rows, config={"seed": 1})
        path = tmp_path / "report.jsonl"
        report.to_jsonl(path)

        loaded, stored = MetricReport.from_jsonl(path)
        assert loaded.labels == report.labels
        assert loaded.config == {"seed": 1}
        assert len(loaded.rows) == len(report.rows)

        recomputed_lang = loaded.language_aggregates()
        recomputed_emo = loaded.emotion_aggregates()
        recomputed_avd = loaded.avd_emotion_table()
        for rec in stored:
            if rec["record"] == "language_aggregate":
                assert recomputed_lang[rec["lang"]]["metrics"] == rec["metrics"]
                assert recomputed_lang[rec["lang"]]["count"] == rec["count"]
            elif rec["record"] == "emotion_aggregate":
                agg = recomputed_emo[(rec["lang"], rec["emotion"])]
                assert agg["metrics"] == rec["metrics"]
            elif rec["record"] == "avd_emotion_table":
                per, avg = recomputed_avd[rec["lang"]]
                assert per == rec["per_emotion"]
                assert avg == rec["average"]

        assert render_report(loaded) == render_report(report)

    def test_rendered_values_match_machine_readable(self, tmp_path):
        report = wer_fixture_report()
        path = tmp_path / "r.jsonl"
        report.to_jsonl(path)
        stored_lang = [
            json.loads(l)
            for l in path.read_text().splitlines()
            if '"language_aggregate"' in l
        ][0]
        rendered = render_language_table(report)
        assert format_metric("wer", stored_lang["metrics"]["wer"]) in rendered

    def test_utterance_rows_sorted_by_id(self, tmp_path):
        rows = [
            UtteranceRow("b", "en", "Angry", {"wer": 1.0}),
            UtteranceRow("a", "en", "Angry", {"wer": 2.0}),
        ]
        path = tmp_path / "r.jsonl"
        make_report(rows).to_jsonl(path)
        ids = [
            json.loads(l)["utt_id"]
            for l in path.read_text().splitlines()
            if '"utterance"' in l
        ]
        assert ids == ["a", "b"]
