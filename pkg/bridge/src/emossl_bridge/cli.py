"""CLI: `emossl-bridge dump-features|dump-avd --model <id> --out <dir> <wavs...>`.

Exit codes match the toolkit contract: 0 success, 1 usage error, 2 data or
model error (including any per-file failure, which is listed on stderr).
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .bridge import DEFAULT_MODEL, BridgeConfig, BridgeError, dump_avd, dump_features

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="emossl-bridge", description=__doc__)
    parser.add_argument("--version", action="version", version=f"emossl-bridge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--model", default=DEFAULT_MODEL,
                       help="hub id or local checkpoint directory")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--lang", default="-", help="language tag for fragment lines")
        p.add_argument("--emotion", default="-", help="emotion label for fragment lines")
        p.add_argument("--sample-rate", type=int, default=16000)
        p.add_argument("wavs", nargs="+", help="input wav files (PCM16)")

    p = sub.add_parser("dump-features", help="write layer hidden states as EMOF files")
    p.add_argument("--layer", type=int, default=9)
    common(p)
    p.set_defaults(op="features")

    p = sub.add_parser("dump-avd", help="write AVD triples as manifest fragment lines")
    p.add_argument("--slot", choices=["ref", "hyp"], default="ref",
                   help="manifest field the triple fills")
    common(p)
    p.set_defaults(op="avd")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    cfg = BridgeConfig(
        model=args.model,
        layer=getattr(args, "layer", 9),
        sample_rate_hz=args.sample_rate,
        out_dir=args.out,
        lang=args.lang,
        emotion=args.emotion,
    )
    try:
        if args.op == "features":
            result = dump_features(args.wavs, cfg)
        else:
            result = dump_avd(args.wavs, cfg, slot=args.slot)
    except (BridgeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    for line in result.errors:
        print(f"error: {line}", file=sys.stderr)
    print(
        f"{args.command}: {len(result.fragment_lines)} ok, "
        f"{len(result.errors)} failed, fragment in {cfg.out_dir}"
    )
    return EXIT_DATA if result.errors else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
