"""The ``extract`` command line: annotation and candidate retrieval.

Exit codes: 0 success, 1 adapter error (model load failure, version
mismatch, bad input), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .annotate import annotate_file, make_annotator
from .embed import (
    TOP_K,
    build_embedding_index,
    load_index,
    make_encoder,
    retrieve_candidates,
    save_index,
)
from .errors import AdapterError
from .schemas import validate_annotations, validate_candidates


def _require(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise AdapterError(f"{what} not found: {p}")
    return p


def cmd_annotate(args) -> int:
    annotator = make_annotator(args.backend, args.lexicon)
    n = annotate_file(_require(args.in_path, "report file"), args.out, annotator)
    validate_annotations(args.out)
    print(json.dumps({"reports": n, "backend": annotator.name}))
    return 0


def cmd_index(args) -> int:
    encoder = make_encoder(args.encoder)
    index = build_embedding_index(_require(args.strings, "string dump"), encoder)
    save_index(index, args.out)
    print(json.dumps({"strings": len(index.strings), "encoder": encoder.name}))
    return 0


def cmd_candidates(args) -> int:
    encoder = make_encoder(args.encoder)
    if args.index:
        index = load_index(_require(args.index, "embedding index"))
        if args.strings:
            from .embed import read_string_dump

            _, digest = read_string_dump(_require(args.strings, "string dump"))
            if digest != index.strings_sha256:
                raise AdapterError(
                    "string dump does not match the embedding index "
                    f"(dump sha {digest[:12]}.., index sha {index.strings_sha256[:12]}..); "
                    "refusing to run"
                )
    else:
        if not args.strings:
            raise AdapterError("candidates needs --strings or a prebuilt --index")
        index = build_embedding_index(_require(args.strings, "string dump"), encoder)
    n = retrieve_candidates(
        _require(args.mentions, "mention file"), index, encoder, args.out, k=args.top_k
    )
    validate_candidates(args.out)
    print(json.dumps({"mentions": n, "encoder": encoder.name}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract",
        description="Neural extraction front end: report annotation and CUI candidate retrieval.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate", help="annotate raw reports at both granularities")
    p.add_argument("--in", dest="in_path", required=True,
                   help="JSON-lines reports: {report_id, text}")
    p.add_argument("--out", required=True, help="annotation JSON-lines output")
    p.add_argument("--backend", default="lexicon", choices=["lexicon", "radgraph-xl"])
    p.add_argument("--lexicon", help="override the bundled term lexicon (lexicon backend)")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("index", help="prebuild the embedding index from a string dump")
    p.add_argument("--strings", required=True, help="TSV of (cui, string) from the catalog ingest")
    p.add_argument("--out", required=True, help="index output (.npz)")
    p.add_argument("--encoder", default="hashing", choices=["hashing", "sapbert"])
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("candidates", help="top-k cosine candidates per mention string")
    p.add_argument("--strings", help="TSV of (cui, string); builds the index in process")
    p.add_argument("--index", help="prebuilt index (.npz); verified against --strings if both given")
    p.add_argument("--mentions", required=True, help="mention JSON-lines from the downstream pipeline")
    p.add_argument("--out", required=True, help="candidate JSON-lines output")
    p.add_argument("--encoder", default="hashing", choices=["hashing", "sapbert"])
    p.add_argument("--top-k", type=int, default=TOP_K)
    p.set_defaults(func=cmd_candidates)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AdapterError as exc:
        print(f"extract: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
