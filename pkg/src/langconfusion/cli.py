"""Command-line interface.

Exit codes: 0 success, 2 usage or input error, 3 partial processing failure,
4 remote/auth failure. All randomness flows from --seed, so any command run
twice on identical inputs produces byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from pathlib import Path

from langconfusion import client as client_mod
from langconfusion import corpus as corpus_mod
from langconfusion import decoding, lid, metrics, resources
from langconfusion.detectors import detect, load_dictionary
from langconfusion.langcore import LanguageCode

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PARTIAL = 3
EXIT_REMOTE = 4


def _fail(message: str, code: int = EXIT_INPUT) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_train_lid(args: argparse.Namespace) -> int:
    try:
        corpus = lid.load_training_corpus(args.corpus)
        config = lid.LidConfig(
            n_min=args.n_min, n_max=args.n_max, alpha=args.alpha, confidence_threshold=args.threshold
        )
        model = lid.train(corpus, config)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    lid.save_model(model, args.out)
    print(f"trained {len(model.languages)} languages -> {args.out}")
    return EXIT_OK


def cmd_detect(args: argparse.Namespace) -> int:
    try:
        prompts = {p.id: p for p in corpus_mod.load_prompts(args.prompts)}
        responses = corpus_mod.load_responses(args.responses)
        dictionary = (
            load_dictionary(args.dictionary) if args.dictionary else resources.default_dictionary()
        )
        if args.external_lid:
            line_lid = lid.load_external_predictions(args.external_lid)
        elif args.lid_model:
            line_lid = lid.load_model(args.lid_model)
        else:
            return _fail("one of --lid-model or --external-lid is required")
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    if not responses:
        return _fail(f"no responses in {args.responses}")

    records = []
    failures = 0
    for index, response in enumerate(responses):
        prompt = prompts.get(response.prompt_id)
        if prompt is None:
            print(
                f"warning: response {index} references unknown prompt {response.prompt_id!r}",
                file=sys.stderr,
            )
            failures += 1
            continue
        response_id = f"{response.prompt_id}#{response.model}"
        try:
            record = detect(
                response.text,
                prompt.target,
                line_lid,
                dictionary,
                response_id=response_id,
                guard_units=args.guard_units,
                tags={
                    "model": response.model,
                    "language": prompt.target.value,
                    "dataset": prompt.dataset,
                    "setting": prompt.setting,
                },
            )
        except KeyError as exc:  # missing external prediction
            print(f"warning: {exc}", file=sys.stderr)
            failures += 1
            continue
        records.append(record)
    metrics.save_detections(records, args.out)
    print(f"wrote {len(records)} detection records -> {args.out}")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    try:
        records = metrics.load_detections(args.detections)
        group_by = [k.strip() for k in args.group_by.split(",") if k.strip()]
        frames = metrics.aggregate(records, group_by)
        rendered = metrics.render_report(frames, args.format, metric=args.metric)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    _write_text(args.out, rendered)
    return EXIT_OK


def _parse_prompt_tokens(raw: str) -> list[str]:
    tokens = json.loads(raw)
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise ValueError("--prompt must be a JSON array of token strings")
    return tokens


def _parse_sweep(raw: str) -> tuple[list[float], list[float]]:
    temperatures: list[float] = []
    top_ps: list[float] = []
    for part in raw.split(";"):
        part = part.strip()
        if not part:
            continue
        key, _, values = part.partition("=")
        parsed = [float(v) for v in values.split(",") if v.strip()]
        if key.strip() == "T":
            temperatures = parsed
        elif key.strip() == "p":
            top_ps = parsed
        else:
            raise ValueError(f"unknown sweep key {key.strip()!r} (use T=... and p=...)")
    return temperatures, top_ps


def _simulate_cell(
    lm: decoding.ToyLM, prompt: list[str], config: decoding.SamplingConfig, n_runs: int
) -> dict:
    first: Counter[str] = Counter()
    totals: Counter[str] = Counter()
    for run in range(n_runs):
        run_config = decoding.SamplingConfig(
            temperature=config.temperature,
            top_p=config.top_p,
            top_k=config.top_k,
            seed=config.seed + run,
            max_tokens=config.max_tokens,
        )
        tokens, _ = decoding.generate(lm, prompt, run_config)
        if tokens:
            first[tokens[0]] += 1
        totals.update(tokens)
    return {
        "n_runs": n_runs,
        "sampling": config.as_dict(),
        "first_token_counts": dict(sorted(first.items())),
        "first_token_freq": {t: c / n_runs for t, c in sorted(first.items())},
        "token_totals": dict(sorted(totals.items())),
    }


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        lm = decoding.load_toylm(args.lm)
        prompt = _parse_prompt_tokens(args.prompt)
        config = decoding.SamplingConfig(
            temperature=args.temperature,
            top_p=args.top_p,
            top_k=args.top_k,
            seed=args.seed,
            max_tokens=args.max_tokens,
        )
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        return _fail(str(exc))

    try:
        if args.sweep:
            temperatures, top_ps = _parse_sweep(args.sweep)
            grid = []
            for t in temperatures or [config.temperature]:
                for p in top_ps or [config.top_p]:
                    cell_config = decoding.SamplingConfig(
                        temperature=t,
                        top_p=p,
                        top_k=config.top_k,
                        seed=config.seed,
                        max_tokens=config.max_tokens,
                    )
                    grid.append(_simulate_cell(lm, prompt, cell_config, args.runs))
            summary = {"grid": grid}
        else:
            summary = _simulate_cell(lm, prompt, config, args.runs)
            if args.trace_out:
                with open(args.trace_out, "w", encoding="utf-8") as handle:
                    for run in range(args.runs):
                        run_config = decoding.SamplingConfig(
                            temperature=config.temperature,
                            top_p=config.top_p,
                            top_k=config.top_k,
                            seed=config.seed + run,
                            max_tokens=config.max_tokens,
                        )
                        tokens, trace = decoding.generate(lm, prompt, run_config)
                        handle.write(
                            json.dumps(
                                {
                                    "run": run,
                                    "seed": run_config.seed,
                                    "tokens": tokens,
                                    "steps": [
                                        {
                                            "candidates": [[t, p] for t, p in s.candidates],
                                            "sampled": s.sampled,
                                        }
                                        for s in trace.steps
                                    ],
                                },
                                ensure_ascii=False,
                                sort_keys=True,
                            )
                        )
                        handle.write("\n")
    except (decoding.MissingContextError, ValueError) as exc:
        return _fail(str(exc))
    _write_text(args.out, json.dumps(summary, ensure_ascii=False, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_amend(args: argparse.Namespace) -> int:
    try:
        prompt_texts = corpus_mod.load_lines(args.prompts)
        templates = (
            corpus_mod.load_lines(args.templates)
            if args.templates
            else corpus_mod.load_lines(resources.instruction_templates_path())
        )
        targets = [LanguageCode.parse(t.strip()) for t in args.targets.split(",") if t.strip()]
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    if not prompt_texts or not targets:
        return _fail("need at least one prompt and one target language")

    records = []
    try:
        for i, text in enumerate(prompt_texts):
            for target in targets:
                for offset, position in enumerate(("start", "end")):
                    records.append(
                        corpus_mod.amend_crosslingual(
                            text,
                            target,
                            position,
                            templates,
                            seed=args.seed + 2 * i + offset,
                            dataset=args.dataset,
                        )
                    )
    except ValueError as exc:
        return _fail(str(exc))
    corpus_mod.save_prompts(records, args.out)
    print(f"wrote {len(records)} crosslingual prompts -> {args.out}")
    return EXIT_OK


def cmd_fewshot(args: argparse.Namespace) -> int:
    examples: list[tuple[str, str]] = []
    try:
        if args.examples:
            with open(args.examples, encoding="utf-8") as handle:
                for lineno, raw in enumerate(handle, 1):
                    if not raw.strip():
                        continue
                    doc = json.loads(raw)
                    try:
                        examples.append((doc["question"], doc["answer"]))
                    except KeyError as exc:
                        return _fail(f"{args.examples}:{lineno}: missing field {exc.args[0]}")
        built = corpus_mod.build_fewshot(examples, args.query, args.style, args.budget)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        return _fail(str(exc))
    if args.style == "chat_turns":
        _write_text(
            args.out,
            json.dumps([{"role": r, "content": c} for r, c in built], ensure_ascii=False, indent=2)
            + "\n",
        )
    else:
        _write_text(args.out, built)
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    try:
        endpoint_doc = json.loads(Path(args.endpoint).read_text(encoding="utf-8"))
        cfg = client_mod.EndpointConfig(**endpoint_doc)
        prompts = corpus_mod.load_prompts(args.prompts)
        sampling = decoding.SamplingConfig(
            temperature=args.temperature,
            top_p=args.top_p,
            top_k=args.top_k,
            seed=args.seed,
            max_tokens=args.max_tokens,
        )
    except (OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
        return _fail(str(exc))
    if not prompts:
        return _fail(f"no prompts in {args.prompts}")

    results, manifest = client_mod.batch_generate(cfg, prompts, sampling, args.run_dir)
    run_dir = Path(args.run_dir)
    records = []
    for prompt, result in zip(prompts, results):
        if result is None:
            continue
        record = result.record
        if result.trace is not None:
            trace_dir = run_dir / "traces"
            trace_dir.mkdir(parents=True, exist_ok=True)
            trace_path = trace_dir / f"{prompt.id}.jsonl"
            decoding.save_trace(result.trace, trace_path)
            record = corpus_mod.ResponseRecord(
                prompt_id=record.prompt_id,
                model=record.model,
                text=record.text,
                sampling=record.sampling,
                trace_path=str(trace_path),
            )
        records.append(record)
    corpus_mod.save_responses(records, args.out)

    failures = [row for row in manifest if row["status"] == "failed"]
    print(f"wrote {len(records)} responses -> {args.out} ({len(failures)} failures)")
    if failures and not records:
        return EXIT_REMOTE
    if failures:
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_analyze_cps(args: argparse.Namespace) -> int:
    try:
        target = LanguageCode.parse(args.target)
        dictionary = (
            load_dictionary(args.dictionary) if args.dictionary else resources.default_dictionary()
        )
        annotations = (
            decoding.load_cp_annotations(args.annotations) if args.annotations else {}
        )
        trace_paths = [Path(p) for p in args.traces]
    except (OSError, ValueError) as exc:
        return _fail(str(exc))

    traces = []
    cps = []
    try:
        for path in trace_paths:
            trace = decoding.load_trace(path)
            traces.append(trace)
            cps.append(
                decoding.find_confusion_points(
                    trace,
                    trace.tokens(),
                    target,
                    dictionary,
                    annotations=annotations.get(path.stem),
                )
            )
        report = decoding.cp_aggregate(traces, cps, args.top_p)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    _write_text(
        args.out,
        json.dumps(decoding.cp_report_to_dict(report), ensure_ascii=False, indent=2, sort_keys=True)
        + "\n",
    )
    return EXIT_OK


def _add_sampling_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--temperature", type=float, default=0.3)
    parser.add_argument("--top-p", type=float, default=0.75)
    parser.add_argument("--top-k", type=int, default=None)
    parser.add_argument("--max-tokens", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="langconfusion",
        description="Detect and measure language confusion in LLM outputs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-lid", help="train the n-gram LID model from a TSV corpus")
    p.add_argument("--corpus", required=True, help="TSV file: lang<TAB>text per line")
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--n-min", type=int, default=1)
    p.add_argument("--n-max", type=int, default=3)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--threshold", type=float, default=lid.DEFAULT_CONFIDENCE_THRESHOLD)
    p.set_defaults(func=cmd_train_lid)

    p = sub.add_parser("detect", help="run line and word confusion detection")
    p.add_argument("--prompts", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--lid-model")
    p.add_argument("--external-lid", help="TSV of externally produced line predictions")
    p.add_argument("--dictionary", help="English word list (default: bundled)")
    p.add_argument("--guard-units", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("score", help="aggregate detections into metric frames")
    p.add_argument("--detections", required=True)
    p.add_argument("--group-by", default="model,language")
    p.add_argument("--format", default="csv", choices=["csv", "md", "json"])
    p.add_argument("--metric", default="lpr", choices=["lpr", "wpr", "lcpr", "line_accuracy"])
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("simulate", help="sample from a toy LM and summarize outcomes")
    p.add_argument("--lm", required=True, help="toy LM JSON file")
    p.add_argument("--prompt", required=True, help='JSON array of tokens, e.g. \'["the"," quick"]\'')
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--sweep", help='grid spec like "T=0.3,1.0;p=0.5,0.75"')
    p.add_argument("--trace-out", help="optional JSONL of per-run traces")
    p.add_argument("--out", default="-")
    _add_sampling_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("amend", help="build crosslingual prompts from English prompts")
    p.add_argument("--prompts", required=True, help="plain text file, one English prompt per line")
    p.add_argument("--targets", required=True, help="comma-separated target language codes")
    p.add_argument("--templates", help="instruction templates file (default: bundled)")
    p.add_argument("--dataset", default="custom")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_amend)

    p = sub.add_parser("fewshot", help="assemble a few-shot prompt")
    p.add_argument("--examples", help="JSONL with question/answer fields")
    p.add_argument("--query", required=True)
    p.add_argument("--style", default="qa_template", choices=["qa_template", "chat_turns"])
    p.add_argument("--budget", type=int, default=corpus_mod.DEFAULT_ANSWER_BUDGET)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_fewshot)

    p = sub.add_parser("generate", help="collect responses from a remote endpoint")
    p.add_argument("--endpoint", required=True, help="endpoint config JSON file")
    p.add_argument("--prompts", required=True)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out", required=True)
    _add_sampling_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("analyze-cps", help="confusion-point statistics over traces")
    p.add_argument("--traces", nargs="+", required=True, help="trace JSONL files")
    p.add_argument("--target", required=True)
    p.add_argument("--dictionary")
    p.add_argument("--annotations", help="TSV override: response_id, step_index")
    p.add_argument("--top-p", type=float, default=0.75)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_analyze_cps)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
