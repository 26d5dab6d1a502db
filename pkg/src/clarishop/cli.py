"""Command line entry points: ingest, gen-catalog, bench, simulate, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .agent import ClarifyingSearchAgent
from .catalog import (
    Catalog,
    CatalogError,
    SyntheticSpec,
    generate_synthetic_catalog,
    load_catalog,
)
from .simbench import (
    BenchmarkError,
    BenchmarkSpec,
    SimulatedUser,
    run_benchmark,
    run_sessions,
    simulate_answer,
)


def _load_spec_file(path: str) -> tuple[Catalog, BenchmarkSpec]:
    with Path(path).open("r", encoding="utf-8") as fp:
        data = json.load(fp)
    catalog_spec = data.pop("catalog", None)
    if not isinstance(catalog_spec, dict):
        raise BenchmarkError('spec file needs a "catalog" object with "path" or "synthetic"')
    if "path" in catalog_spec:
        catalog = load_catalog(catalog_spec["path"])
    elif "synthetic" in catalog_spec:
        synthetic = dict(catalog_spec["synthetic"])
        seed = synthetic.pop("seed", 0)
        catalog = generate_synthetic_catalog(seed, SyntheticSpec(**synthetic))
    else:
        raise BenchmarkError('catalog object needs "path" or "synthetic"')
    return catalog, BenchmarkSpec.from_dict(data)


def _cmd_ingest(args: argparse.Namespace) -> int:
    try:
        catalog = load_catalog(args.path)
    except CatalogError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{len(catalog)} items across {len(catalog.categories)} categories")
    for category in catalog.categories:
        print(f"  {category}: {len(catalog.bucket(category))} items")
    return 0


def _cmd_gen_catalog(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(
        categories=args.categories,
        items_per_category=args.items_per_category,
        values_per_facet=args.values_per_facet,
    )
    catalog = generate_synthetic_catalog(args.seed, spec)
    catalog.save(args.out)
    print(f"wrote {len(catalog)} items to {args.out}")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    catalog, spec = _load_spec_file(args.spec)
    report = run_benchmark(catalog, spec)
    if args.out:
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
        print(f"wrote report to {args.out}")
    print(report.render_text(), end="")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    catalog, spec = _load_spec_file(args.spec)
    if spec.setting == "traditional":
        raise BenchmarkError("simulate needs a conversational spec")
    run = run_sessions(catalog, spec)
    lines: list[str] = []
    for truth, memory in zip(run.truths, run.memories):
        for index, (role, payload) in enumerate(memory.dialogue_log, start=1):
            lines.append(
                json.dumps(
                    {
                        "session_id": memory.session_id,
                        "truth_id": truth.id,
                        "turn": index,
                        "role": role,
                        "payload": payload,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
            )
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {len(lines)} transcript lines to {args.out}")
    else:
        print(text, end="")
    return 0


def _cmd_demo(args: argparse.Namespace) -> int:
    """Run one simulated session against a random ground-truth item and print it."""
    catalog = load_catalog(args.catalog)
    spec = BenchmarkSpec(docs_per_category=1, seed=args.seed)
    run = run_sessions(catalog, spec)
    truth = run.truths[0]
    print(f"ground truth: {truth.id} ({truth.title})")
    for outputs in run.turn_outputs[:1]:
        for output in outputs:
            print(f"turn {output.turn}: query={output.query!r}")
            print(f"  top items: {', '.join(output.items.ids())}")
            for question in output.questions:
                print(f"  Q[{question.facet}] {question.text} {list(question.candidates)}")
            replies = simulate_answer(SimulatedUser(item=truth), output.questions)
            print(f"  simulated answers: {replies}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .config import AgentConfig
    from .service import create_app

    catalog = load_catalog(args.catalog)
    config = AgentConfig.from_file(args.config) if args.config else AgentConfig()
    agent = ClarifyingSearchAgent(catalog, config)
    static_dir = args.static or _default_static_dir()
    app = create_app(agent, static_dir=static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _default_static_dir() -> str | None:
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return str(candidate) if candidate.is_dir() else None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clarishop")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="validate a catalog file and print stats")
    p_ingest.add_argument("path")
    p_ingest.set_defaults(func=_cmd_ingest)

    p_gen = sub.add_parser("gen-catalog", help="write a synthetic catalog")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--categories", type=int, default=4)
    p_gen.add_argument("--items-per-category", type=int, default=100)
    p_gen.add_argument("--values-per-facet", type=int, default=8)
    p_gen.set_defaults(func=_cmd_gen_catalog)

    p_bench = sub.add_parser("bench", help="run a benchmark spec file")
    p_bench.add_argument("spec")
    p_bench.add_argument("--out", help="write the JSON report here")
    p_bench.set_defaults(func=_cmd_bench)

    p_sim = sub.add_parser("simulate", help="run simulated sessions, dump transcripts")
    p_sim.add_argument("spec")
    p_sim.add_argument("--out", help="write transcript JSONL here")
    p_sim.set_defaults(func=_cmd_simulate)

    p_demo = sub.add_parser("demo", help="print one simulated session")
    p_demo.add_argument("catalog")
    p_demo.add_argument("--seed", type=int, default=0)
    p_demo.set_defaults(func=_cmd_demo)

    p_serve = sub.add_parser("serve", help="serve the HTTP session API")
    p_serve.add_argument("--catalog", required=True)
    p_serve.add_argument("--config", help="agent config JSON file")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--static", help="directory of built web UI assets")
    p_serve.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CatalogError, BenchmarkError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
