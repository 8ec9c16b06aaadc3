"""Command-line entry points.

    prefsearch serve --kb hotels.json --port 8080 [--data-dir DIR]
    prefsearch run   --kb hotels.json --script dialogue.script [--out out.json]
    prefsearch query --kb hotels.json --constraints "stars > 2; location = kyoto" \
                     [--preferences "ratings = excellent : best"]

``query`` prints the bucket order as tab-separated lines plus per-item
ranking metrics; ``run`` executes a scripted dialogue and exits nonzero
if any expected-act assertion fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dialogue import PolicyConfig, load_templates
from .kb import load_knowledge_base, value_key
from .preferences import bucket_order, preference_metrics
from .session import (DEFAULT_CONFIG, DEFAULT_TEMPLATES, SessionStore,
                      parse_constraint_list, run_script)
from .constraints import filter_items
from .preferences import parse_preference


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--kb", required=True, help="KB document (JSON)")
    parser.add_argument("--config", default=None, help="policy config JSON")
    parser.add_argument("--templates", default=None, help="template file")


def _load_config(path: str | None) -> PolicyConfig:
    return PolicyConfig.from_file(path or DEFAULT_CONFIG)


def _load_templates(path: str | None) -> dict[str, str]:
    return load_templates(path or DEFAULT_TEMPLATES)


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    store = SessionStore(config=_load_config(args.config),
                         templates=_load_templates(args.templates),
                         data_dir=args.data_dir)
    store.add_kb(load_knowledge_base(Path(args.kb)))
    restored = store.load_sessions()
    if restored:
        print(f"restored {len(restored)} session(s)", file=sys.stderr)
    uvicorn.run(create_app(store, ui_dir=args.ui), host=args.host,
                port=args.port)
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    result = run_script(args.kb, args.script,
                        config=_load_config(args.config),
                        templates=_load_templates(args.templates))
    doc = {"transcript": result.transcript, "metrics": result.metrics,
           "failures": result.failures}
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True),
                                  encoding="utf-8")
    else:
        json.dump(doc, sys.stdout, indent=2, sort_keys=True)
        print()
    for line in result.failures:
        print(f"FAIL {line}", file=sys.stderr)
    return 0 if result.ok else 1


def cmd_query(args: argparse.Namespace) -> int:
    kb = load_knowledge_base(Path(args.kb))
    config = _load_config(args.config)
    constraints = parse_constraint_list(args.constraints or "", kb)
    prefs = []
    for part in (args.preferences or "").split(";"):
        part = part.strip()
        if part:
            prefs.append(parse_preference(part, kb))
    rs = filter_items(kb, constraints)
    bo = bucket_order(rs, prefs, kb, constraints=constraints,
                      band_divisor=config.importance_band_divisor)
    metrics = preference_metrics(bo)
    print(f"# {len(rs.ids)} items in {len(bo.buckets)} buckets")
    print("bucket\titem\tname\tscore\twins")
    for idx, bucket in enumerate(bo.buckets):
        for item_id in bucket:
            item = kb.item(item_id)
            print(f"{idx}\t{item_id}\t{item.name}"
                  f"\t{metrics['score'][item_id]:.4f}"
                  f"\t{metrics['wins'][item_id]}")
    if args.facets:
        print("\nslot\tvalue\tcount")
        for slot, counts in sorted(rs.facets.items()):
            for v, n in sorted(counts.items(), key=lambda kv: value_key(kv[0])):
                print(f"{slot}\t{value_key(v)}\t{n}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prefsearch")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the HTTP service")
    _common(serve)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8080)
    serve.add_argument("--data-dir", default=None,
                       help="directory for session event logs")
    serve.add_argument("--ui", default=None,
                       help="serve this directory as the browser client at /ui")
    serve.set_defaults(func=cmd_serve)

    run = sub.add_parser("run", help="execute a scripted dialogue")
    _common(run)
    run.add_argument("--script", required=True)
    run.add_argument("--out", default=None, help="write the transcript here")
    run.set_defaults(func=cmd_run)

    query = sub.add_parser("query", help="filter and rank items")
    _common(query)
    query.add_argument("--constraints", default="",
                       help='e.g. "stars > 2; location = kyoto"')
    query.add_argument("--preferences", default="",
                       help='e.g. "ratings = excellent : best"')
    query.add_argument("--facets", action="store_true",
                       help="also print facet counts")
    query.set_defaults(func=cmd_query)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
