"""Command-line surface: extract, fit-codebook, tokenize, evaluate, pitch,
formants, and emotion-space scripting.

Exit codes are a stable contract: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import glob as globlib
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, acoustic_metrics, emotion_space, sequence_metrics
from . import signal_io as sio
from . import vq_tokenizer as vq
from .report import MetricReport, UtteranceRow, render_report

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class CliDataError(Exception):
    """Wraps a data-level failure so main() can map it to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit(2); our contract says 1
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _fail(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _load_manifest(path: str) -> sio.EvalManifest:
    manifest = sio.parse_manifest(path)
    if not manifest.records:
        raise CliDataError(f"{path}: manifest has no records")
    return manifest


def _sorted_records(manifest: sio.EvalManifest):
    return sorted(manifest.records, key=lambda r: r.utt_id)


def cmd_extract(args) -> int:
    manifest = _load_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    for rec in _sorted_records(manifest):
        out_path = out_dir / f"{rec.utt_id}.emof"
        if out_path.exists() and not args.force:
            continue
        try:
            if rec.path is None or rec.path.suffix.lower() != ".wav":
                raise CliDataError("record has no wav path")
            wav = sio.read_wav(rec.path)
            feats = sio.mel_cepstra(wav)
            sio.write_features(out_path, feats)
        except (CliDataError, ValueError, OSError) as exc:
            _fail(f"extract {rec.utt_id}: {exc}")
            failures += 1
    return EXIT_DATA if failures else EXIT_OK


def cmd_fit_codebook(args) -> int:
    paths = sorted(globlib.glob(args.features, recursive=True))
    if not paths:
        raise CliDataError(f"no feature files match {args.features!r}")
    mats = [sio.read_features(p) for p in paths]
    iterations = [0]

    def hook(iteration: int, inertia: float) -> None:
        iterations[0] = iteration

    cb = vq.kmeans_fit(
        mats,
        k=args.k,
        seed=args.seed,
        language=args.lang,
        iteration_hook=hook,
    )
    vq.save_codebook(args.out, cb)
    print(
        f"fit-codebook: K={cb.num_clusters} D={cb.dim} "
        f"frames={sum(m.num_frames for m in mats)} "
        f"iterations={iterations[0]} inertia={cb.inertia!r}"
    )
    return EXIT_OK


def cmd_tokenize(args) -> int:
    import json

    manifest = _load_manifest(args.manifest)
    cb = vq.load_codebook(args.codebook)
    lines = []
    for rec in _sorted_records(manifest):
        if rec.path is None or rec.path.suffix.lower() != ".emof":
            _warn(f"tokenize {rec.utt_id}: no feature file, skipped")
            continue
        if cb.language and rec.lang != cb.language:
            _warn(
                f"tokenize {rec.utt_id}: language {rec.lang!r} differs from "
                f"codebook language {cb.language!r}"
            )
        feats = sio.read_features(rec.path)
        tokens = vq.encode(feats, cb, utt_id=rec.utt_id)
        lines.append(
            json.dumps(
                {
                    "utt_id": rec.utt_id,
                    "k": cb.num_clusters,
                    "tokens": tokens.tokens.tolist(),
                },
                sort_keys=True,
            )
        )
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


ALL_METRICS = (
    "wer",
    "cer",
    "speech_bert_score",
    "speech_bleu",
    "speech_token_distance",
    "mcd",
    "log_f0_rmse",
    "avd_rmse",
)


def _evaluate_config(args, cb: vq.Codebook | None) -> dict:
    config = {
        "toolkit_version": __version__,
        "metrics": list(args.metrics_list),
        "mel": {
            "frame_len_s": sio.DEFAULT_FRAME_LEN_S,
            "frame_shift_s": sio.DEFAULT_FRAME_SHIFT_S,
            "n_fft": "next-pow2(frame_len)",
            "n_mels": 40,
            "n_ceps": 13,
            "log_floor": sio.LOG_FLOOR,
            "mel_scale": "htk",
            "window": "hann-periodic",
        },
        "f0": {
            "fmin_hz": 50.0,
            "fmax_hz": 600.0,
            "frame_shift_s": acoustic_metrics.F0_FRAME_SHIFT_S,
            "voicing_threshold": acoustic_metrics.F0_VOICING_THRESHOLD,
            "energy_floor": acoustic_metrics.F0_ENERGY_FLOOR,
        },
        "mcd": {"use_c0": False, "alignment": "dtw", "distance": "euclidean"},
        "log_f0_rmse": {"alignment": "index-by-time"},
        "speech_bleu": {"max_n": args.bleu_max_n},
        "text_normalization": "nfkc; strip P*; lowercase in word mode; collapse whitespace",
        "avd_rmse": {"pooling": "all-dims-per-emotion"},
    }
    if cb is not None:
        config["codebook"] = {
            "path": str(args.codebook),
            "k": cb.num_clusters,
            "dim": cb.dim,
            "language": cb.language,
            "seed": cb.seed,
        }
    return config


def _pair_metrics(rec, ref_rec, cb, want, bleu_max_n) -> dict[str, float]:
    out: dict[str, float] = {}
    if rec.path is None or ref_rec.path is None:
        return out
    hyp_suffix = rec.path.suffix.lower()
    ref_suffix = ref_rec.path.suffix.lower()
    if hyp_suffix == ".emof" and ref_suffix == ".emof":
        hyp_m = sio.read_features(rec.path)
        ref_m = sio.read_features(ref_rec.path)
        if "speech_bert_score" in want and ref_m.dim == hyp_m.dim:
            out["speech_bert_score"] = sequence_metrics.speech_bert_score(ref_m, hyp_m)
        if "mcd" in want and ref_m.source == hyp_m.source == "mel-cepstrum":
            out["mcd"] = acoustic_metrics.mcd(ref_m, hyp_m)
        if cb is not None and ref_m.dim == cb.dim and hyp_m.dim == cb.dim:
            ref_t = vq.encode(ref_m, cb, utt_id=ref_rec.utt_id)
            hyp_t = vq.encode(hyp_m, cb, utt_id=rec.utt_id)
            if "speech_bleu" in want:
                out["speech_bleu"] = sequence_metrics.speech_bleu(
                    ref_t, hyp_t, max_n=bleu_max_n
                )
            if "speech_token_distance" in want:
                out["speech_token_distance"] = sequence_metrics.speech_token_distance(
                    ref_t, hyp_t
                )
    elif hyp_suffix == ".wav" and ref_suffix == ".wav":
        hyp_w = sio.read_wav(rec.path)
        ref_w = sio.read_wav(ref_rec.path)
        if hyp_w.sample_rate_hz != ref_w.sample_rate_hz:
            raise CliDataError(
                f"sample-rate mismatch {ref_w.sample_rate_hz} vs {hyp_w.sample_rate_hz}; "
                "resample upstream"
            )
        if "mcd" in want:
            out["mcd"] = acoustic_metrics.mcd(
                sio.mel_cepstra(ref_w), sio.mel_cepstra(hyp_w)
            )
        if "log_f0_rmse" in want:
            out["log_f0_rmse"] = acoustic_metrics.log_f0_rmse(
                acoustic_metrics.estimate_f0(ref_w), acoustic_metrics.estimate_f0(hyp_w)
            )
    return out


def cmd_evaluate(args) -> int:
    manifest = _load_manifest(args.manifest)
    cb = vq.load_codebook(args.codebook) if args.codebook else None
    want = args.metrics_list
    report = MetricReport(labels=manifest.labels, config=_evaluate_config(args, cb))
    failures = 0
    for rec in _sorted_records(manifest):
        metrics: dict[str, float] = {}
        try:
            if rec.ref_transcript is not None and rec.hyp_transcript is not None:
                if "wer" in want:
                    metrics["wer"] = sequence_metrics.wer(
                        rec.ref_transcript, rec.hyp_transcript, mode="word"
                    )
                if "cer" in want:
                    metrics["cer"] = sequence_metrics.cer(
                        rec.ref_transcript, rec.hyp_transcript
                    )
            if "avd_rmse" in want and rec.avd_ref is not None and rec.avd_hyp is not None:
                sq = sum((h - r) ** 2 for h, r in zip(rec.avd_hyp, rec.avd_ref))
                metrics["avd_rmse"] = math.sqrt(sq / 3.0)
            if rec.paired_utt is not None:
                if cb is not None and cb.language and rec.lang != cb.language:
                    _warn(
                        f"evaluate {rec.utt_id}: language {rec.lang!r} differs from "
                        f"codebook language {cb.language!r}"
                    )
                metrics.update(
                    _pair_metrics(
                        rec, manifest.by_id(rec.paired_utt), cb, want, args.bleu_max_n
                    )
                )
        except (CliDataError, ValueError, OSError) as exc:
            _fail(f"evaluate {rec.utt_id}: {exc}")
            failures += 1
        report.add_row(UtteranceRow(rec.utt_id, rec.lang, rec.emotion, metrics))

    for name in want:
        if name not in report.metrics_present():
            _warn(f"metric {name}: no usable inputs in manifest; column omitted")

    report.to_jsonl(args.out)
    rendered = render_report(report)
    Path(str(args.out) + ".txt").write_text(rendered, encoding="utf-8")
    print(rendered, end="")
    return EXIT_DATA if failures else EXIT_OK


def cmd_pitch(args) -> int:
    manifest = _load_manifest(args.manifest)
    failures = 0
    lines = ["utt_id,time_s,f0_hz"]
    for rec in _sorted_records(manifest):
        try:
            if rec.path is None or rec.path.suffix.lower() != ".wav":
                raise CliDataError("record has no wav path")
            track = acoustic_metrics.estimate_f0(sio.read_wav(rec.path))
            for t, f0 in zip(track.times_s, track.f0_hz):
                cell = "" if np.isnan(f0) else f"{f0:.3f}"
                lines.append(f"{rec.utt_id},{t:.3f},{cell}")
        except (CliDataError, ValueError, OSError) as exc:
            _fail(f"pitch {rec.utt_id}: {exc}")
            failures += 1
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_DATA if failures else EXIT_OK


def cmd_formants(args) -> int:
    manifest = _load_manifest(args.manifest)
    failures = 0
    lines = ["utt_id,time_s,f1_hz,f2_hz,f3_hz"]
    for rec in _sorted_records(manifest):
        try:
            if rec.path is None or rec.path.suffix.lower() != ".wav":
                raise CliDataError("record has no wav path")
            frames = acoustic_metrics.formants(sio.read_wav(rec.path))
            for fr in frames:
                cells = [
                    "" if f is None else f"{f:.3f}"
                    for f in (fr.f1_hz, fr.f2_hz, fr.f3_hz)
                ]
                lines.append(f"{rec.utt_id},{fr.time_s:.3f}," + ",".join(cells))
            medians = []
            for pick in (lambda f: f.f1_hz, lambda f: f.f2_hz, lambda f: f.f3_hz):
                vals = [pick(f) for f in frames if pick(f) is not None]
                medians.append(f"{float(np.median(vals)):.1f}" if vals else "-")
            print(
                f"formants {rec.utt_id}: median F1={medians[0]} "
                f"F2={medians[1]} F3={medians[2]} ({len(frames)} voiced frames)"
            )
        except (CliDataError, ValueError, OSError) as exc:
            _fail(f"formants {rec.utt_id}: {exc}")
            failures += 1
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_DATA if failures else EXIT_OK


def _parse_triple(text: str, where: str) -> tuple[float, float, float]:
    parts = text.replace(",", " ").split()
    if len(parts) != 3:
        raise CliDataError(f"{where}: expected 3 numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError:
        raise CliDataError(f"{where}: non-numeric value in {text!r}") from None


def cmd_emotion(args) -> int:
    center = emotion_space.AVDVector(*_parse_triple(args.center, "--center"))
    out = []
    for lineno, line in enumerate(sys.stdin, start=1):
        line = line.strip()
        if not line:
            continue
        where = f"stdin:{lineno}"
        if args.op == "to-spherical":
            p = emotion_space.AVDVector(*_parse_triple(line, where))
            s = emotion_space.cartesian_to_spherical(p, center)
            result = s.as_tuple()
        elif args.op == "to-cartesian":
            s = emotion_space.SphericalEmotion(*_parse_triple(line, where))
            result = emotion_space.spherical_to_cartesian(s, center).as_tuple()
        elif args.op == "interpolate":
            parts = line.replace(",", " ").split()
            if len(parts) != 6:
                raise CliDataError(f"{where}: interpolate needs 6 numbers (two r,theta,phi triples)")
            a = emotion_space.SphericalEmotion(*(float(x) for x in parts[:3]))
            b = emotion_space.SphericalEmotion(*(float(x) for x in parts[3:]))
            result = emotion_space.interpolate(a, b, args.t).as_tuple()
        else:  # scale
            s = emotion_space.SphericalEmotion(*_parse_triple(line, where))
            result = emotion_space.scale_intensity(s, args.k).as_tuple()
        out.append(" ".join(f"{x:.12g}" for x in result))
    print("\n".join(out))
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="emossl", description=__doc__)
    parser.add_argument("--version", action="version", version=f"emossl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="compute mel-cepstral EMOF files from manifest wavs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--feature-kind", choices=["mel-cepstrum"], default="mel-cepstrum")
    p.add_argument("--force", action="store_true", help="rewrite existing files")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fit-codebook", help="fit a k-means codebook on EMOF files")
    p.add_argument("--features", required=True, help="glob of EMOF files")
    p.add_argument("--k", type=int, default=vq.DEFAULT_K)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lang", default="")
    p.add_argument("--out", required=True, help="output EMOC path")
    p.set_defaults(func=cmd_fit_codebook)

    p = sub.add_parser("tokenize", help="encode manifest feature files into prosody tokens")
    p.add_argument("--manifest", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("evaluate", help="compute metrics over a manifest and render tables")
    p.add_argument("--manifest", required=True)
    p.add_argument("--codebook", default=None)
    p.add_argument("--metrics", default=",".join(ALL_METRICS))
    p.add_argument("--bleu-max-n", type=int, default=2)
    p.add_argument("--out", required=True, help="output report path (JSONL)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pitch", help="export pitch tracks as CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pitch)

    p = sub.add_parser("formants", help="export formant tracks as CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_formants)

    p = sub.add_parser("emotion", help="emotion-space transforms on stdin triples")
    p.add_argument(
        "--op",
        required=True,
        choices=["to-spherical", "to-cartesian", "interpolate", "scale"],
    )
    p.add_argument("--center", default="0,0,0", help="AVD center for the transform ops")
    p.add_argument("--t", type=float, default=0.5, help="interpolation weight")
    p.add_argument("--k", type=float, default=1.0, help="intensity scale factor")
    p.set_defaults(func=cmd_emotion)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "metrics", None) is not None:
        names = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
        unknown = [m for m in names if m not in ALL_METRICS]
        if unknown:
            _fail(f"unknown metrics: {', '.join(unknown)} (choose from {', '.join(ALL_METRICS)})")
            return EXIT_USAGE
        args.metrics_list = names
    if not 1 <= getattr(args, "bleu_max_n", 2) <= 4:
        _fail("--bleu-max-n must lie in 1..4")
        return EXIT_USAGE
    try:
        return args.func(args)
    except (
        CliDataError,
        sio.ManifestError,
        sio.FormatError,
        acoustic_metrics.NumericalInstabilityError,
        ValueError,
        OSError,
    ) as exc:
        _fail(str(exc))
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
