import io
import json

import numpy as np
import pytest

from emossl.cli import main
from emossl.signal_io import (
    FeatureMatrix,
    format_manifest_record,
    read_features,
    write_features,
    write_wav,
)

from conftest import make_silence, make_sine, make_synthetic_vowel

EN_LABELS = "Angry,Happy,Sad,Surprise"


def write_manifest(path, labels, record_lines):
    path.write_text(
        f"#emoeval v1 labels={labels}\n" + "".join(f"{l}\n" for l in record_lines),
        encoding="utf-8",
    )
    return path


def wav_corpus(tmp_path, specs):
    """specs: {name: waveform}; returns manifest path with one record per wav."""
    lines = []
    for name, wave in specs.items():
        write_wav(tmp_path / f"{name}.wav", wave)
        lines.append(
            format_manifest_record(name, path=f"{name}.wav", emotion="Angry", lang="en")
        )
    return write_manifest(tmp_path / "corpus.tsv", EN_LABELS, lines)


class TestExtract:
    def test_two_utterances(self, tmp_path, capsys):
        manifest = wav_corpus(
            tmp_path, {"u1": make_sine(220.0, 0.2), "u2": make_sine(150.0, 0.2)}
        )
        out = tmp_path / "feats"
        assert main(["extract", "--manifest", str(manifest), "--out", str(out)]) == 0
        assert (out / "u1.emof").exists() and (out / "u2.emof").exists()
        feats = read_features(out / "u1.emof")
        assert feats.source == "mel-cepstrum"
        assert feats.dim == 13

    def test_rerun_skips_without_force(self, tmp_path):
        manifest = wav_corpus(tmp_path, {"u1": make_sine(220.0, 0.2)})
        out = tmp_path / "feats"
        main(["extract", "--manifest", str(manifest), "--out", str(out)])
        (out / "u1.emof").write_bytes(b"sentinel")
        assert main(["extract", "--manifest", str(manifest), "--out", str(out)]) == 0
        assert (out / "u1.emof").read_bytes() == b"sentinel"
        assert main(["extract", "--manifest", str(manifest), "--out", str(out), "--force"]) == 0
        assert (out / "u1.emof").read_bytes() != b"sentinel"

    def test_unresolvable_wav_is_data_error_naming_utt(self, tmp_path, capsys):
        write_manifest(
            tmp_path / "m.tsv", EN_LABELS,
            ["ghost\tnot_there.wav\t-\t-\tAngry\ten\t-\t-\t-"],
        )
        code = main(["extract", "--manifest", str(tmp_path / "m.tsv"), "--out", str(tmp_path)])
        assert code == 2
        assert "ghost" in capsys.readouterr().err

    def test_record_without_audio_fails_named(self, tmp_path, capsys):
        write_manifest(
            tmp_path / "m.tsv", EN_LABELS,
            ["noaudio\t-\t-\t-\tAngry\ten\t-\t-\t-"],
        )
        code = main(["extract", "--manifest", str(tmp_path / "m.tsv"), "--out", str(tmp_path)])
        assert code == 2
        assert "noaudio" in capsys.readouterr().err


class TestFitCodebook:
    def make_features(self, tmp_path, n_files=2, frames=30, dim=4, seed=0):
        rng = np.random.default_rng(seed)
        for i in range(n_files):
            m = FeatureMatrix(
                rng.normal(size=(frames, dim)).astype(np.float32), "ssl-layer9", 0.02
            )
            write_features(tmp_path / f"f{i}.emof", m)
        return str(tmp_path / "*.emof")

    def test_two_cluster_toy_prints_zero_inertia(self, tmp_path, capsys):
        values = np.array([[0.0, 0.0]] * 5 + [[9.0, 9.0]] * 5, dtype=np.float32)
        write_features(tmp_path / "toy.emof", FeatureMatrix(values, "ssl-layer9", 0.02))
        out = tmp_path / "cb.emoc"
        code = main([
            "fit-codebook", "--features", str(tmp_path / "*.emof"),
            "--k", "2", "--seed", "0", "--lang", "en", "--out", str(out),
        ])
        assert code == 0
        printed = capsys.readouterr().out
        assert "inertia=0.0" in printed
        assert "iterations=" in printed

    def test_default_k_is_200(self):
        from emossl.cli import build_parser

        args = build_parser().parse_args(
            ["fit-codebook", "--features", "x", "--out", "y"]
        )
        assert args.k == 200

    def test_byte_identical_across_runs(self, tmp_path):
        glob = self.make_features(tmp_path, seed=3)
        out1, out2 = tmp_path / "a.emoc", tmp_path / "b.emoc"
        for out in (out1, out2):
            assert main([
                "fit-codebook", "--features", glob, "--k", "5",
                "--seed", "11", "--out", str(out),
            ]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_insufficient_frames_is_data_error(self, tmp_path, capsys):
        glob = self.make_features(tmp_path, n_files=1, frames=3)
        code = main(["fit-codebook", "--features", glob, "--k", "10", "--out", str(tmp_path / "c.emoc")])
        assert code == 2


class TestTokenize:
    def test_tokens_and_language_warning(self, tmp_path, capsys):
        rng = np.random.default_rng(5)
        feats = FeatureMatrix(rng.normal(size=(12, 3)).astype(np.float32), "ssl-layer9", 0.02)
        write_features(tmp_path / "u1.emof", feats)
        write_manifest(
            tmp_path / "m.tsv", EN_LABELS,
            ["u1\tu1.emof\t-\t-\tHappy\tja\t-\t-\t-"],
        )
        main([
            "fit-codebook", "--features", str(tmp_path / "*.emof"),
            "--k", "3", "--lang", "en", "--out", str(tmp_path / "cb.emoc"),
        ])
        capsys.readouterr()
        out = tmp_path / "tokens.jsonl"
        code = main([
            "tokenize", "--manifest", str(tmp_path / "m.tsv"),
            "--codebook", str(tmp_path / "cb.emoc"), "--out", str(out),
        ])
        assert code == 0
        err = capsys.readouterr().err
        assert "differs from codebook language" in err
        rec = json.loads(out.read_text().splitlines()[0])
        assert rec["utt_id"] == "u1"
        assert rec["k"] == 3
        assert len(rec["tokens"]) == 12
        assert all(0 <= t < 3 for t in rec["tokens"])


def engineered_wer_manifest(tmp_path):
    """Four utterances whose per-utterance WERs average to 19.584 -> '19.58'."""
    cases = [(23, 5), (17, 3), (13, 3), (63, 10)]
    lines = []
    for idx, (n_ref, n_sub) in enumerate(cases):
        ref = " ".join(f"w{j}" for j in range(n_ref))
        hyp = " ".join((f"x{j}" if j < n_sub else f"w{j}") for j in range(n_ref))
        lines.append(
            format_manifest_record(
                f"u{idx}", ref_transcript=ref, hyp_transcript=hyp,
                emotion="Angry", lang="en",
            )
        )
    return write_manifest(tmp_path / "wer.tsv", EN_LABELS, lines)


class TestEvaluate:
    def test_wer_fixture_renders_reference_row(self, tmp_path, capsys):
        manifest = engineered_wer_manifest(tmp_path)
        out = tmp_path / "report.jsonl"
        code = main([
            "evaluate", "--manifest", str(manifest),
            "--metrics", "wer", "--out", str(out),
        ])
        assert code == 0
        rendered = capsys.readouterr().out
        assert "19.58" in rendered
        assert (tmp_path / "report.jsonl.txt").read_text() == rendered
        meta = json.loads(out.read_text().splitlines()[0])
        assert meta["record"] == "meta"
        assert meta["config"]["metrics"] == ["wer"]
        assert "mel" in meta["config"]

    def test_avd_fixture_renders_table3_row(self, tmp_path, capsys):
        targets = {"Angry": 0.0837, "Happy": 0.0658, "Sad": 0.0757, "Surprise": 0.0839}
        lines = []
        for emotion, delta in targets.items():
            for i in range(2):
                ref = (0.1, 0.2, 0.3)
                hyp = tuple(r + delta for r in ref)
                lines.append(
                    format_manifest_record(
                        f"{emotion}_{i}", emotion=emotion, lang="en",
                        avd_ref=ref, avd_hyp=hyp,
                    )
                )
        manifest = write_manifest(tmp_path / "avd.tsv", EN_LABELS, lines)
        code = main([
            "evaluate", "--manifest", str(manifest),
            "--metrics", "avd_rmse", "--out", str(tmp_path / "r.jsonl"),
        ])
        assert code == 0
        rendered = capsys.readouterr().out
        assert "0.0773" in rendered
        header = [l for l in rendered.splitlines() if l.startswith("lang")][-1]
        assert header.split() == ["lang", "Avg", "Angry", "Happy", "Sad", "Surprise"]

    def test_six_emotion_japanese_columns(self, tmp_path, capsys):
        labels = "Angry,Happy,Sad,Surprise,Disgust,Fear"
        lines = [
            format_manifest_record(
                f"ja_{e}", emotion=e, lang="ja",
                avd_ref=(0.0, 0.0, 0.0), avd_hyp=(0.05, 0.05, 0.05),
            )
            for e in labels.split(",")
        ]
        manifest = write_manifest(tmp_path / "ja.tsv", labels, lines)
        code = main([
            "evaluate", "--manifest", str(manifest),
            "--metrics", "avd_rmse", "--out", str(tmp_path / "r.jsonl"),
        ])
        assert code == 0
        rendered = capsys.readouterr().out
        header = [l for l in rendered.splitlines() if l.startswith("lang")][-1]
        assert header.split() == ["lang", "Avg", "Angry", "Happy", "Sad", "Surprise", "Disgust", "Fear"]

    def test_paired_feature_metrics_with_codebook(self, tmp_path, capsys):
        rng = np.random.default_rng(7)
        ref_values = rng.normal(size=(25, 4)).astype(np.float32)
        hyp_values = (ref_values + rng.normal(scale=0.05, size=(25, 4))).astype(np.float32)
        write_features(tmp_path / "gt.emof", FeatureMatrix(ref_values, "ssl-layer9", 0.02))
        write_features(tmp_path / "hyp.emof", FeatureMatrix(hyp_values, "ssl-layer9", 0.02))
        manifest = write_manifest(
            tmp_path / "m.tsv", EN_LABELS,
            [
                "gt\tgt.emof\t-\t-\tAngry\ten\t-\t-\t-",
                "hyp\thyp.emof\t-\t-\tAngry\ten\t-\t-\tgt",
            ],
        )
        main([
            "fit-codebook", "--features", str(tmp_path / "gt.emof"),
            "--k", "4", "--lang", "en", "--out", str(tmp_path / "cb.emoc"),
        ])
        capsys.readouterr()
        out = tmp_path / "r.jsonl"
        code = main([
            "evaluate", "--manifest", str(manifest),
            "--codebook", str(tmp_path / "cb.emoc"), "--out", str(out),
        ])
        assert code == 0
        captured = capsys.readouterr()
        rows = [json.loads(l) for l in out.read_text().splitlines() if '"utterance"' in l]
        hyp_row = [r for r in rows if r["utt_id"] == "hyp"][0]
        assert set(hyp_row["metrics"]) == {
            "speech_bert_score", "speech_bleu", "speech_token_distance"
        }
        assert hyp_row["metrics"]["speech_bert_score"] > 0.9
        # metrics with no usable inputs are warned about and omitted
        assert "mcd" in captured.err and "column omitted" in captured.err

    def test_wav_pair_mcd_and_logf0(self, tmp_path, capsys):
        ref = make_sine(220.0, 0.3)
        hyp = make_sine(230.0, 0.3)
        write_wav(tmp_path / "gt.wav", ref)
        write_wav(tmp_path / "hyp.wav", hyp)
        manifest = write_manifest(
            tmp_path / "m.tsv", EN_LABELS,
            [
                "gt\tgt.wav\t-\t-\tAngry\ten\t-\t-\t-",
                "hyp\thyp.wav\t-\t-\tAngry\ten\t-\t-\tgt",
            ],
        )
        out = tmp_path / "r.jsonl"
        code = main([
            "evaluate", "--manifest", str(manifest),
            "--metrics", "mcd,log_f0_rmse", "--out", str(out),
        ])
        assert code == 0
        rows = [json.loads(l) for l in out.read_text().splitlines() if '"utterance"' in l]
        hyp_row = [r for r in rows if r["utt_id"] == "hyp"][0]
        assert hyp_row["metrics"]["mcd"] > 0.0
        expected_logf0 = abs(np.log(220.0) - np.log(230.0))
        assert hyp_row["metrics"]["log_f0_rmse"] == pytest.approx(expected_logf0, rel=0.05)

    def test_rerun_byte_identical(self, tmp_path, capsys):
        manifest = engineered_wer_manifest(tmp_path)
        out1, out2 = tmp_path / "r1.jsonl", tmp_path / "r2.jsonl"
        for out in (out1, out2):
            main(["evaluate", "--manifest", str(manifest), "--metrics", "wer,cer",
                  "--out", str(out)])
        assert out1.read_bytes() == out2.read_bytes()
        assert (tmp_path / "r1.jsonl.txt").read_bytes() == (tmp_path / "r2.jsonl.txt").read_bytes()

    def test_empty_manifest_is_data_error(self, tmp_path):
        write_manifest(tmp_path / "m.tsv", EN_LABELS, [])
        assert main(["evaluate", "--manifest", str(tmp_path / "m.tsv"),
                     "--out", str(tmp_path / "r.jsonl")]) == 2


class TestPitchFormantsExport:
    def test_pitch_csv_with_silence(self, tmp_path, capsys):
        manifest = wav_corpus(
            tmp_path, {"tone": make_sine(220.0, 0.3), "quiet": make_silence(0.3)}
        )
        out = tmp_path / "pitch.csv"
        assert main(["pitch", "--manifest", str(manifest), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "utt_id,time_s,f0_hz"
        quiet_rows = [l for l in lines if l.startswith("quiet,")]
        assert quiet_rows and all(l.endswith(",") for l in quiet_rows)
        tone_rows = [l for l in lines if l.startswith("tone,")]
        voiced = [l for l in tone_rows if not l.endswith(",")]
        assert len(voiced) > 10

    def test_pitch_deterministic(self, tmp_path, capsys):
        manifest = wav_corpus(tmp_path, {"tone": make_sine(220.0, 0.2)})
        out1, out2 = tmp_path / "p1.csv", tmp_path / "p2.csv"
        for out in (out1, out2):
            main(["pitch", "--manifest", str(manifest), "--out", str(out)])
        assert out1.read_bytes() == out2.read_bytes()

    def test_formants_csv_and_median_summary(self, tmp_path, capsys):
        write_wav(tmp_path / "vowel.wav", make_synthetic_vowel())
        manifest = write_manifest(
            tmp_path / "m.tsv", EN_LABELS,
            ["vowel\tvowel.wav\t-\t-\tHappy\ten\t-\t-\t-"],
        )
        out = tmp_path / "formants.csv"
        assert main(["formants", "--manifest", str(manifest), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "utt_id,time_s,f1_hz,f2_hz,f3_hz"
        assert len(lines) > 3
        assert "median F1=" in capsys.readouterr().out


class TestEmotionCommand:
    def run_with_stdin(self, argv, text, monkeypatch, capsys):
        monkeypatch.setattr("sys.stdin", io.StringIO(text))
        code = main(argv)
        return code, capsys.readouterr().out

    @pytest.mark.filterwarnings("ignore:AVD point")  # 12-digit text round trip drifts a hair
    def test_to_spherical_and_back(self, monkeypatch, capsys):
        code, out = self.run_with_stdin(
            ["emotion", "--op", "to-spherical"], "1 1 1\n", monkeypatch, capsys
        )
        assert code == 0
        r, theta, phi = map(float, out.split())
        assert r == pytest.approx(np.sqrt(3.0))
        assert theta == pytest.approx(0.9553166181245093, abs=1e-9)
        assert phi == pytest.approx(np.pi / 4, abs=1e-9)
        code, out = self.run_with_stdin(
            ["emotion", "--op", "to-cartesian"], f"{r} {theta} {phi}\n", monkeypatch, capsys
        )
        assert code == 0
        assert [float(x) for x in out.split()] == pytest.approx([1.0, 1.0, 1.0], abs=1e-9)

    def test_interpolate_midpoint(self, monkeypatch, capsys):
        code, out = self.run_with_stdin(
            ["emotion", "--op", "interpolate", "--t", "0.5"],
            "1 1 3 1 1 -3\n",
            monkeypatch, capsys,
        )
        assert code == 0
        _, _, phi = map(float, out.split())
        assert phi == pytest.approx(np.pi, abs=1e-9)

    def test_scale(self, monkeypatch, capsys):
        code, out = self.run_with_stdin(
            ["emotion", "--op", "scale", "--k", "0.5"], "2 1 1\n", monkeypatch, capsys
        )
        assert code == 0
        assert [float(x) for x in out.split()] == pytest.approx([1.0, 1.0, 1.0])


class TestExitCodes:
    def test_usage_error_is_one(self, capsys):
        assert main(["no-such-command"]) == 1
        assert main([]) == 1

    def test_unknown_metric_is_usage_error(self, tmp_path, capsys):
        write_manifest(tmp_path / "m.tsv", EN_LABELS, [])
        assert main([
            "evaluate", "--manifest", str(tmp_path / "m.tsv"),
            "--metrics", "bogus", "--out", str(tmp_path / "r.jsonl"),
        ]) == 1

    def test_missing_manifest_is_data_error(self, tmp_path):
        assert main([
            "evaluate", "--manifest", str(tmp_path / "nope.tsv"),
            "--out", str(tmp_path / "r.jsonl"),
        ]) == 2
