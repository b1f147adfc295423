#!/usr/bin/env python3
"""Convert MBPP JSONL (optionally with MBPP+ tests) into the canonical pdlopt dataset format."""

import argparse
import json
import sys


def load_plus(path):
    """task id -> list of assertion strings."""
    tests = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            raw = json.loads(line)
            task_id = str(raw["task_id"]).split("/")[-1]
            assertions = raw.get("test_list") or []
            if isinstance(raw.get("test"), str):
                assertions += [l.strip() for l in raw["test"].splitlines() if l.strip().startswith("assert ")]
            tests[task_id] = assertions
    return tests


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("input", help="MBPP JSONL (task_id, text, code, test_list)")
    parser.add_argument("--plus", help="MBPP+ JSONL whose assertions are added to the hidden tests")
    parser.add_argument("--output", help="output JSONL (default: stdout)")
    args = parser.parse_args()

    plus = load_plus(args.plus) if args.plus else {}
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    count = 0
    with open(args.input, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            raw = json.loads(line)
            tests = [t.strip() for t in raw["test_list"]]
            if not tests:
                print(f"skipping {raw['task_id']}: no tests", file=sys.stderr)
                continue
            hidden = list(tests)
            for t in plus.get(str(raw["task_id"]), []):
                if t not in hidden:
                    hidden.append(t)
            record = {
                "id": f"mbpp-{raw['task_id']}",
                "question": raw["text"].strip() + "\n" + tests[0],
                "answer": raw["code"].replace("\r\n", "\n").strip(),
                "test": tests[0],
                "hidden_tests": hidden,
            }
            out.write(json.dumps(record, ensure_ascii=False) + "\n")
            count += 1
    print(f"wrote {count} instances", file=sys.stderr)


if __name__ == "__main__":
    main()
