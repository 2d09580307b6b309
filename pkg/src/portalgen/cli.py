"""Command line entry point: sample codes, generate prompts and messages,
evaluate corpora, and build/serve/summarize the blind ranking study.

Every output file carries a provenance header (command, seed, input digests),
and all randomness in a command flows from its single --seed flag, so reruns
with identical inputs are byte-identical. Exit code 0 means the command fully
succeeded; partial batch failures exit nonzero after writing the successful
items and a per-item failure report to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import annotation, icd9, jsonl, metrics, stage1, stage2
from .corpus import (
    LENGTH_FILTER_MAX,
    LENGTH_FILTER_MIN,
    filter_by_length,
    load_corpus,
    load_grounding_pack,
    save_corpus,
    validate_grounding_pack,
)
from .llm import HttpClient, MockClient, ProviderConfig


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _provenance(command: str, seed: int | None, inputs: list[Path]) -> dict:
    return {
        "command": command,
        "seed": seed,
        "inputs": {p.name: _sha256(p) for p in inputs},
    }


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {path}")
    return p


class UsageError(Exception):
    pass


def _add_provider_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("provider")
    group.add_argument("--mock", action="store_true", help="use the offline deterministic provider")
    group.add_argument("--endpoint", help="OpenAI-compatible completions endpoint URL")
    group.add_argument("--model", help="model name sent to the endpoint")
    group.add_argument("--temperature", type=float, help="sampling temperature (default 0.75)")
    group.add_argument("--max-new-tokens", type=int, help="completion token budget (default 256)")
    group.add_argument("--api-key-env", help="env var holding the API key (default OPENAI_API_KEY)")
    group.add_argument("--timeout", type=int, help="request timeout in seconds (default 60)")
    group.add_argument("--max-retries", type=int, help="retries on 429/5xx (default 3)")
    group.add_argument("--max-parallel", type=int, help="max in-flight requests (default 4)")
    group.add_argument("--config", help="JSON config file supplying provider defaults")


def _build_client(args: argparse.Namespace, seed: int):
    config_file: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            config_file = json.load(f)

    def setting(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return config_file.get(key, default)

    if args.mock:
        return MockClient(seed=seed, max_parallel=setting(args.max_parallel, "max_parallel", 4))
    endpoint = setting(args.endpoint, "endpoint", None)
    if not endpoint:
        raise UsageError("either --mock or --endpoint (or an endpoint in --config) is required")
    config = ProviderConfig(
        endpoint_url=endpoint,
        model=setting(args.model, "model", ""),
        api_key_env=setting(args.api_key_env, "api_key_env", "OPENAI_API_KEY"),
        temperature=setting(args.temperature, "temperature", 0.75),
        max_new_tokens=setting(args.max_new_tokens, "max_new_tokens", 256),
        timeout_seconds=setting(args.timeout, "timeout_seconds", 60),
        max_retries=setting(args.max_retries, "max_retries", 3),
        max_parallel=setting(args.max_parallel, "max_parallel", 4),
    )
    return HttpClient(config)


def _load_chapters_and_histogram(args: argparse.Namespace):
    chapters = icd9.load_chapters(args.chapters) if args.chapters else list(icd9.DEFAULT_CHAPTERS)
    hist = icd9.load_histogram(args.histogram) if args.histogram else icd9.uniform_histogram(chapters)
    return chapters, hist


def cmd_sample(args: argparse.Namespace) -> int:
    db_path = _require_file(args.db, "ICD-9 database")
    db = icd9.parse_icd9_db(db_path)
    chapters, hist = _load_chapters_and_histogram(args)
    codes = icd9.sample_codes(db, chapters, hist, args.n, args.seed)
    inputs = [db_path] + [Path(p) for p in (args.chapters, args.histogram) if p]
    prov = _provenance("sample", args.seed, inputs)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(f"# provenance: {json.dumps(prov, ensure_ascii=False)}\n")
        for code in codes:
            f.write(f"{code.code}\t{code.description}\n")
    print(f"sampled {len(codes)} codes -> {args.out}")
    return 0


def _report_failures(failures) -> None:
    for failure in failures:
        print(f"FAILED {failure.item_id}: {failure.error}", file=sys.stderr)
    print(f"{len(failures)} item(s) failed", file=sys.stderr)


def cmd_stage1(args: argparse.Namespace) -> int:
    codes_path = _require_file(args.codes, "codes file")
    codes = icd9.parse_icd9_db(codes_path)
    template = stage1.load_stage1_template(args.template) if args.template else stage1.Stage1Template()
    client = _build_client(args, args.seed)
    records, failures = stage1.generate_prompts(codes, template, client)
    inputs = [codes_path] + ([Path(args.template)] if args.template else [])
    stage1.save_prompt_records(records, args.out, provenance=_provenance("stage1", args.seed, inputs))
    print(f"generated {len(records)} prompts -> {args.out}")
    if failures:
        _report_failures(failures)
        return 1
    return 0


def cmd_stage2(args: argparse.Namespace) -> int:
    prompts_path = _require_file(args.prompts, "prompts file")
    prompts = stage1.load_prompt_records(prompts_path)
    template = stage2.load_stage2_template(args.template) if args.template else stage2.Stage2Template()
    pack = None
    inputs = [prompts_path] + ([Path(args.template)] if args.template else [])
    if not args.zeroshot:
        if not args.pack:
            raise UsageError("--pack is required unless --zeroshot is given")
        pack_path = _require_file(args.pack, "grounding pack")
        pack = load_grounding_pack(pack_path)
        violations = validate_grounding_pack(pack, expected_size=args.pack_size, sentinel=template.sentinel)
        if violations:
            for v in violations:
                print(f"invalid grounding pack: {v}", file=sys.stderr)
            return 1
        inputs.append(pack_path)
    tag = args.tag or ("zeroshot" if args.zeroshot else "portalgen")
    client = _build_client(args, args.seed)
    corpus, failures = stage2.generate_messages(
        prompts, template, pack, client, base_seed=args.seed, source_tag=tag
    )
    save_corpus(corpus, args.out, provenance=_provenance("stage2", args.seed, inputs))
    print(f"generated {len(corpus.messages)} messages -> {args.out}")
    if failures:
        _report_failures(failures)
        return 1
    return 0


def _parse_system_args(values: list[str]) -> dict[str, Path]:
    systems = {}
    for value in values:
        name, sep, path = value.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"--system expects name=path, got {value!r}")
        if name in systems:
            raise UsageError(f"duplicate system name {name!r}")
        systems[name] = _require_file(path, f"system corpus {name!r}")
    return systems


def cmd_eval(args: argparse.Namespace) -> int:
    ref_path = _require_file(args.reference, "reference corpus")
    reference = load_corpus(ref_path, name="reference")
    bounds = None
    if args.filter_ref_length:
        lo_str, _, hi_str = args.filter_ref_length.partition(",")
        try:
            bounds = (int(lo_str), int(hi_str))
        except ValueError as exc:
            raise UsageError("--filter-ref-length expects MIN,MAX") from exc
        reference = filter_by_length(reference, *bounds)
        if not reference.messages:
            raise UsageError("no reference messages left after the length filter")
    system_paths = _parse_system_args(args.system)
    if not system_paths:
        raise UsageError("at least one --system is required")
    systems = {name: load_corpus(path, name=name) for name, path in system_paths.items()}
    if args.embedder == "remote":
        if not args.embed_endpoint or not args.embed_model:
            raise UsageError("--embedder remote requires --embed-endpoint and --embed-model")
        provider = metrics.RemoteEmbedder(
            args.embed_endpoint, args.embed_model, api_key_env=args.api_key_env or "OPENAI_API_KEY"
        )
    else:
        provider = metrics.HashingNgramEmbedder()
    entries = metrics.evaluate_systems(reference, systems, provider, smoothing_k=args.smoothing_k)
    prov = _provenance("eval", None, [ref_path] + list(system_paths.values()))
    prov.update(
        {
            "filter_ref_length": list(bounds) if bounds else None,
            "embedder": args.embedder,
            "smoothing_k": args.smoothing_k,
            "perplexity_note": (
                "perplexity comes from an add-k bigram model trained on each system corpus; "
                "absolute values are model-specific, only the ordering across systems is meaningful"
            ),
        }
    )
    report = {
        "provenance": prov,
        "systems": [
            {
                "system": e.system,
                "mean_perplexity": e.mean_perplexity,
                "q_value": e.q_value,
                "score_perplexity": e.score_perplexity,
                "score_depth": e.score_depth,
            }
            for e in entries
        ],
    }
    Path(args.out).write_text(json.dumps(report, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    print(f"evaluated {len(entries)} system(s) -> {args.out}")
    return 0


def cmd_annotate_build(args: argparse.Namespace) -> int:
    prompts_path = _require_file(args.prompts, "prompts file")
    prompts = stage1.load_prompt_records(prompts_path)
    system_paths = _parse_system_args(args.system)
    systems = {name: load_corpus(path, name=name) for name, path in system_paths.items()}
    tasks = annotation.create_tasks(prompts, systems, n_tasks=args.n_tasks, seed=args.seed)
    prov = _provenance("annotate build", args.seed, [prompts_path] + list(system_paths.values()))
    annotation.save_tasks(tasks, args.out, provenance=prov)
    print(f"built {len(tasks)} ranking tasks -> {args.out}")
    return 0


def cmd_annotate_serve(args: argparse.Namespace) -> int:
    import uvicorn

    tasks = annotation.load_tasks(_require_file(args.tasks, "tasks file"))
    store = annotation.AnnotationStore(tasks, args.log)
    app = annotation.create_app(store, static_dir=args.static, display_seed=args.display_seed)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_annotate_summary(args: argparse.Namespace) -> int:
    tasks = annotation.load_tasks(_require_file(args.tasks, "tasks file"))
    store = annotation.AnnotationStore(tasks, args.log)
    try:
        summary = store.summary()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    payload = {"mean_ranks": dict(summary.mean_rank), "submission_count": summary.submission_count}
    text = json.dumps(payload, ensure_ascii=False, indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="portalgen",
        description="Grounded synthetic patient portal message generation and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sample = sub.add_parser("sample", help="sample ICD-9 codes from a chapter histogram")
    p_sample.add_argument("--db", required=True, help="ICD-9 database (code<TAB>description)")
    p_sample.add_argument("--chapters", help="chapter table override (JSON Lines)")
    p_sample.add_argument("--histogram", help="chapter count histogram (JSON object)")
    p_sample.add_argument("--n", type=int, required=True)
    p_sample.add_argument("--seed", type=int, required=True)
    p_sample.add_argument("--out", required=True)
    p_sample.set_defaults(func=cmd_sample)

    p_stage1 = sub.add_parser("stage1", help="turn code descriptions into message prompts")
    p_stage1.add_argument("--codes", required=True, help="sampled codes file (code<TAB>description)")
    p_stage1.add_argument("--template", help="stage-1 template override (JSON)")
    p_stage1.add_argument("--seed", type=int, required=True)
    p_stage1.add_argument("--out", required=True)
    _add_provider_args(p_stage1)
    p_stage1.set_defaults(func=cmd_stage1)

    p_stage2 = sub.add_parser("stage2", help="generate patient messages from prompts")
    p_stage2.add_argument("--prompts", required=True, help="prompt records (JSON Lines)")
    p_stage2.add_argument("--pack", help="grounding pack (JSON Lines with prompt/message)")
    p_stage2.add_argument("--zeroshot", action="store_true", help="zero-shot baseline, no grounding")
    p_stage2.add_argument("--template", help="stage-2 template override (JSON)")
    p_stage2.add_argument("--pack-size", type=int, default=10, help="expected exemplar count")
    p_stage2.add_argument("--tag", help="source_tag for generated messages")
    p_stage2.add_argument("--seed", type=int, required=True)
    p_stage2.add_argument("--out", required=True)
    _add_provider_args(p_stage2)
    p_stage2.set_defaults(func=cmd_stage2)

    p_eval = sub.add_parser("eval", help="evaluate system corpora against a reference")
    p_eval.add_argument("--reference", required=True)
    p_eval.add_argument("--system", action="append", default=[], metavar="NAME=PATH")
    p_eval.add_argument(
        "--filter-ref-length",
        metavar="MIN,MAX",
        help=f"e.g. {LENGTH_FILTER_MIN},{LENGTH_FILTER_MAX}; applies to the reference only",
    )
    p_eval.add_argument("--embedder", choices=("builtin", "remote"), default="builtin")
    p_eval.add_argument("--embed-endpoint", help="embeddings endpoint URL (remote embedder)")
    p_eval.add_argument("--embed-model", help="embeddings model name (remote embedder)")
    p_eval.add_argument("--api-key-env", help="env var holding the API key")
    p_eval.add_argument("--smoothing-k", type=float, default=1.0)
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_annotate = sub.add_parser("annotate", help="blind human ranking study")
    annotate_sub = p_annotate.add_subparsers(dest="annotate_command", required=True)

    p_build = annotate_sub.add_parser("build", help="build blinded ranking tasks")
    p_build.add_argument("--prompts", required=True)
    p_build.add_argument("--system", action="append", default=[], metavar="NAME=PATH")
    p_build.add_argument("--n-tasks", type=int, default=10)
    p_build.add_argument("--seed", type=int, required=True)
    p_build.add_argument("--out", required=True)
    p_build.set_defaults(func=cmd_annotate_build)

    p_serve = annotate_sub.add_parser("serve", help="serve the annotation API and UI")
    p_serve.add_argument("--tasks", required=True)
    p_serve.add_argument("--log", required=True, help="submission log (JSON Lines, appended)")
    p_serve.add_argument("--static", help="directory with the UI bundle to serve at /")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--display-seed", type=int, default=0)
    p_serve.set_defaults(func=cmd_annotate_serve)

    p_summary = annotate_sub.add_parser("summary", help="mean rank per system")
    p_summary.add_argument("--tasks", required=True)
    p_summary.add_argument("--log", required=True)
    p_summary.add_argument("--out")
    p_summary.set_defaults(func=cmd_annotate_summary)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, jsonl.JsonLinesError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
