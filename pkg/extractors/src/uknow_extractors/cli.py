"""The ``uknow-extract`` command.

Runs the configured extractors over a corpus directory and writes a
feature manifest::

    uknow-extract --corpus DIR --config cfg.json --out feats.jsonl

Exit statuses mirror the downstream pipeline: 0 success, 1 usage error,
2 data error (unreadable corpus, bad config, unresolvable model), 3
internal error.  A JSON summary goes to stdout.
"""
from __future__ import annotations

import argparse
import json
import sys
import traceback

from .config import load_config
from .errors import ExtractError
from .runner import extract_features

__version__ = "0.1.0"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uknow-extract",
                     description="emit a feature manifest for a corpus")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--corpus", required=True,
                        help="corpus directory (pairs.tsv / news.jsonl)")
    parser.add_argument("--config", required=True,
                        help="extractor configuration JSON")
    parser.add_argument("--out", required=True,
                        help="output manifest path (.jsonl)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        config = load_config(args.config)
        summary = extract_features(args.corpus, config, args.out)
    except (ExtractError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3
    sys.stdout.write(json.dumps(summary, sort_keys=True,
                                separators=(",", ":")) + "\n")
    print(f"wrote {summary['n_records']} feature records to {args.out}",
          file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
