"""Metric report assembly: per-utterance rows, aggregates, and rendered tables.

The machine-readable form is line-delimited JSON; every aggregate it stores
can be recomputed from the utterance rows alone, and the rendered fixed-width
tables are just formatted views of the same numbers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from . import __version__

METRIC_ORDER = (
    "wer",
    "cer",
    "speech_bert_score",
    "speech_bleu",
    "speech_token_distance",
    "mcd",
    "log_f0_rmse",
    "avd_rmse",
)

METRIC_HEADERS = {
    "wer": "WER(%)",
    "cer": "CER(%)",
    "speech_bert_score": "SpeechBERTScore",
    "speech_bleu": "SpeechBLEU",
    "speech_token_distance": "SpeechTokenDist.",
    "mcd": "MCD",
    "log_f0_rmse": "LogF0RMSE",
    "avd_rmse": "AVD-RMSE",
}

METRIC_FORMATS = {
    "wer": ".2f",
    "cer": ".2f",
    "speech_bert_score": ".3f",
    "speech_bleu": ".3f",
    "speech_token_distance": ".3f",
    "mcd": ".3f",
    "log_f0_rmse": ".3f",
    "avd_rmse": ".4f",
}


def format_metric(name: str, value: float) -> str:
    return format(value, METRIC_FORMATS.get(name, ".4f"))


@dataclass(frozen=True)
class UtteranceRow:
    utt_id: str
    lang: str
    emotion: str
    metrics: dict[str, float]


@dataclass
class MetricReport:
    """All computed per-utterance metrics plus the configuration that made them."""

    labels: tuple[str, ...]
    config: dict
    rows: list[UtteranceRow] = field(default_factory=list)
    toolkit_version: str = __version__

    def add_row(self, row: UtteranceRow) -> None:
        self.rows.append(row)

    def metrics_present(self) -> tuple[str, ...]:
        present = {name for row in self.rows for name in row.metrics}
        return tuple(m for m in METRIC_ORDER if m in present)

    def languages(self) -> tuple[str, ...]:
        seen: list[str] = []
        for row in self.rows:
            if row.lang not in seen:
                seen.append(row.lang)
        return tuple(seen)

    def language_aggregates(self) -> dict[str, dict]:
        """Unweighted per-metric means over all utterances of a language."""
        out: dict[str, dict] = {}
        for lang in self.languages():
            rows = [r for r in self.rows if r.lang == lang]
            metrics: dict[str, float] = {}
            for name in self.metrics_present():
                values = [r.metrics[name] for r in rows if name in r.metrics]
                if values:
                    metrics[name] = sum(values) / len(values)
            out[lang] = {"count": len(rows), "metrics": metrics}
        return out

    def emotion_aggregates(self) -> dict[tuple[str, str], dict]:
        """Per (language, emotion) means; avd_rmse pools squared errors."""
        out: dict[tuple[str, str], dict] = {}
        for lang in self.languages():
            for emotion in self.labels:
                rows = [r for r in self.rows if r.lang == lang and r.emotion == emotion]
                if not rows:
                    continue
                metrics: dict[str, float] = {}
                for name in self.metrics_present():
                    values = [r.metrics[name] for r in rows if name in r.metrics]
                    if not values:
                        continue
                    if name == "avd_rmse":
                        metrics[name] = math.sqrt(sum(v * v for v in values) / len(values))
                    else:
                        metrics[name] = sum(values) / len(values)
                out[(lang, emotion)] = {"count": len(rows), "metrics": metrics}
        return out

    def avd_emotion_table(self) -> dict[str, tuple[dict[str, float], float]]:
        """Per language: ({emotion: pooled RMSE}, unweighted average)."""
        per_emotion = self.emotion_aggregates()
        out: dict[str, tuple[dict[str, float], float]] = {}
        for lang in self.languages():
            values = {
                emotion: agg["metrics"]["avd_rmse"]
                for (lg, emotion), agg in per_emotion.items()
                if lg == lang and "avd_rmse" in agg["metrics"]
            }
            if values:
                ordered = {e: values[e] for e in self.labels if e in values}
                out[lang] = (ordered, sum(ordered.values()) / len(ordered))
        return out

    def to_jsonl(self, path: str | Path) -> None:
        lines = [
            json.dumps(
                {
                    "record": "meta",
                    "toolkit_version": self.toolkit_version,
                    "labels": list(self.labels),
                    "config": self.config,
                },
                sort_keys=True,
            )
        ]
        for row in sorted(self.rows, key=lambda r: r.utt_id):
            lines.append(
                json.dumps(
                    {
                        "record": "utterance",
                        "utt_id": row.utt_id,
                        "lang": row.lang,
                        "emotion": row.emotion,
                        "metrics": row.metrics,
                    },
                    sort_keys=True,
                )
            )
        for lang, agg in self.language_aggregates().items():
            lines.append(
                json.dumps(
                    {"record": "language_aggregate", "lang": lang, **agg}, sort_keys=True
                )
            )
        for (lang, emotion), agg in self.emotion_aggregates().items():
            lines.append(
                json.dumps(
                    {
                        "record": "emotion_aggregate",
                        "lang": lang,
                        "emotion": emotion,
                        **agg,
                    },
                    sort_keys=True,
                )
            )
        for lang, (per_emotion, average) in self.avd_emotion_table().items():
            lines.append(
                json.dumps(
                    {
                        "record": "avd_emotion_table",
                        "lang": lang,
                        "per_emotion": per_emotion,
                        "average": average,
                    },
                    sort_keys=True,
                )
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> tuple["MetricReport", list[dict]]:
        """Load a report; returns (report rebuilt from utterance rows, stored aggregates)."""
        report: MetricReport | None = None
        aggregates: list[dict] = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.get("record")
            if kind == "meta":
                report = cls(
                    labels=tuple(rec["labels"]),
                    config=rec["config"],
                    toolkit_version=rec["toolkit_version"],
                )
            elif kind == "utterance":
                if report is None:
                    raise ValueError(f"{path}: utterance record before meta record")
                report.add_row(
                    UtteranceRow(rec["utt_id"], rec["lang"], rec["emotion"], rec["metrics"])
                )
            elif kind in ("language_aggregate", "emotion_aggregate", "avd_emotion_table"):
                aggregates.append(rec)
            else:
                raise ValueError(f"{path}: unknown record kind {kind!r}")
        if report is None:
            raise ValueError(f"{path}: no meta record found")
        return report, aggregates


def _render_table(header: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in header]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip())
    return "\n".join(lines)


def render_language_table(report: MetricReport) -> str:
    """One row per language, one column per metric present."""
    metrics = report.metrics_present()
    header = ["lang", "n"] + [METRIC_HEADERS[m] for m in metrics]
    rows = []
    for lang, agg in report.language_aggregates().items():
        row = [lang, str(agg["count"])]
        for m in metrics:
            value = agg["metrics"].get(m)
            row.append("-" if value is None else format_metric(m, value))
        rows.append(row)
    return _render_table(header, rows)


def render_avd_table(report: MetricReport) -> str:
    """Per-emotion AVD RMSE columns grouped under a leading Avg column."""
    table = report.avd_emotion_table()
    if not table:
        return ""
    emotions = [
        e for e in report.labels if any(e in per for per, _ in table.values())
    ]
    header = ["lang", "Avg"] + list(emotions)
    rows = []
    for lang, (per_emotion, average) in table.items():
        row = [lang, format_metric("avd_rmse", average)]
        for e in emotions:
            row.append(
                format_metric("avd_rmse", per_emotion[e]) if e in per_emotion else "-"
            )
        rows.append(row)
    return _render_table(header, rows)


def render_report(report: MetricReport) -> str:
    """Full rendered view: language table plus, when present, the AVD table."""
    sections = [f"emossl evaluation report (toolkit {report.toolkit_version})"]
    if report.rows:
        sections.append(render_language_table(report))
    avd = render_avd_table(report)
    if avd:
        sections.append("AVD RMSE per emotion")
        sections.append(avd)
    return "\n\n".join(sections) + "\n"
