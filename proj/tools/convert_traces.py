#!/usr/bin/env python3
"""Convert a dump of agent fault-localization runs into the lachesis trace schema.

The expected input layout is one directory per repetition (run) containing one
JSON file per bug, as produced by LLM fault-localization agents that log their
tool interactions as OpenAI-style chat messages:

    dump/
      run1/
        bugsinpy_pandas-1.json
        defects4j_Lang-10.json
        ...
      run2/
        ...

Each per-bug file is expected to hold:

    {
      "messages": [
        {"role": "assistant", "function_call": {"name": "...", "arguments": "{...}"}},
        {"role": "function", "name": "...", "content": "..."},
        ...
        {"role": "assistant", "content": "final answer text"}
      ],
      "buggy_methods": ["pkg.Cls.method(...)", ...]   # the run's answer set
    }

Dump formats differ between tool versions; the three extractor functions below
(`iter_calls`, `extract_answer`, `call_resolved`) isolate everything
format-specific and are the only code that should need adjustment.

Usage:
    tools/convert_traces.py --dump DIR --out traces.json \
        --ground-truth truth.json [--max-steps 10]

    truth.json: {"<bug file stem>": "<ground truth method>", ...}

Validate the result with:  lachesis validate --traces traces.json
"""

import argparse
import json
import sys
from pathlib import Path

# Three functions shared by both benchmark families plus one family-specific
# tool each; index order matches the one-hot layout the models consume.
COMMON_FUNCTIONS = ["get_covered_classes", "get_covered_methods", "get_code_snippet"]
DATASET_FUNCTIONS = {"bugsinpy": "get_docstring", "defects4j": "get_comments"}

FAILED_MARKERS = ("not found", "does not exist", "unknown", "invalid", "error")


def iter_calls(doc):
    """Yield (function_name, argument_or_None, result_text) per tool call."""
    messages = doc.get("messages", [])
    for i, msg in enumerate(messages):
        call = msg.get("function_call")
        if msg.get("role") != "assistant" or not call:
            continue
        argument = None
        raw = call.get("arguments")
        if raw:
            try:
                parsed = json.loads(raw) if isinstance(raw, str) else raw
                if isinstance(parsed, dict) and parsed:
                    argument = str(next(iter(parsed.values())))
            except json.JSONDecodeError:
                argument = str(raw)
        result = ""
        if i + 1 < len(messages) and messages[i + 1].get("role") == "function":
            result = str(messages[i + 1].get("content") or "")
        yield call.get("name", ""), argument, result


def extract_answer(doc):
    """The run's final answer set (possibly empty)."""
    answer = doc.get("buggy_methods")
    if isinstance(answer, dict):
        return sorted(answer.keys())
    if isinstance(answer, list):
        return sorted(set(str(a) for a in answer))
    return []


def call_resolved(result_text):
    """Heuristic: a tool reply that reads like a lookup failure means the
    argument does not exist in the repository."""
    head = result_text[:200].lower()
    return not any(marker in head for marker in FAILED_MARKERS)


def function_index(name, dataset):
    if name in COMMON_FUNCTIONS:
        return COMMON_FUNCTIONS.index(name)
    if name == DATASET_FUNCTIONS.get(dataset):
        return 3 if dataset == "bugsinpy" else 4
    return None


def dataset_of(stem):
    return "bugsinpy" if stem.startswith("bugsinpy") else "defects4j"


def main():
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--dump", required=True, help="directory of per-run subdirectories")
    ap.add_argument("--out", required=True, help="output trace file")
    ap.add_argument("--ground-truth", required=True,
                    help="JSON map: bug file stem -> ground-truth method")
    ap.add_argument("--max-steps", type=int, default=10, help="N, calls kept per run")
    args = ap.parse_args()

    truth = json.loads(Path(args.ground_truth).read_text())
    run_dirs = sorted(p for p in Path(args.dump).iterdir() if p.is_dir())
    if not run_dirs:
        sys.exit("no run directories under " + args.dump)

    stems = sorted({p.stem for d in run_dirs for p in d.glob("*.json")})
    bugs, skipped = [], []
    for stem in stems:
        if stem not in truth:
            skipped.append(stem)
            continue
        dataset = dataset_of(stem)
        runs = []
        for run_dir in run_dirs:
            path = run_dir / (stem + ".json")
            steps, answer = [], []
            if path.exists():
                doc = json.loads(path.read_text())
                for name, argument, result in iter_calls(doc):
                    index = function_index(name, dataset)
                    if index is None or len(steps) >= args.max_steps:
                        continue
                    steps.append({
                        "function": index,
                        "argument": argument,
                        "resolved": True if argument is None else call_resolved(result),
                    })
                answer = extract_answer(doc)
            runs.append({"steps": steps, "answer": answer})
        bugs.append({
            "bug_id": stem,
            "dataset": dataset,
            "ground_truth": truth[stem],
            "runs": runs,
        })

    functions = {name: i for i, name in enumerate(COMMON_FUNCTIONS)}
    functions[DATASET_FUNCTIONS["bugsinpy"]] = 3
    functions[DATASET_FUNCTIONS["defects4j"]] = 4
    out = {
        "R": len(run_dirs),
        "N": args.max_steps,
        "functions": functions,
        "bugs": bugs,
    }
    Path(args.out).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(bugs)} bugs ({len(run_dirs)} runs each) to {args.out}")
    if skipped:
        print(f"skipped {len(skipped)} bugs without ground truth entries", file=sys.stderr)


if __name__ == "__main__":
    main()
