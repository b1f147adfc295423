#!/usr/bin/env python3
"""Convert GSM8K or GSM-Hard JSONL into the canonical pdlopt dataset format."""

import argparse
import json
import re
import sys


def gsm8k_record(index, raw, prefix):
    reasoning, _, final = raw["answer"].rpartition("####")
    steps = [line.strip() for line in reasoning.splitlines() if line.strip()]
    answer = final.strip().replace(",", "")
    return {"id": f"{prefix}{index}", "question": raw["question"].strip(), "answer": answer, "steps": steps}


def gsm_hard_record(index, raw, prefix):
    target = raw["target"]
    if isinstance(target, float) and target.is_integer():
        target = int(target)
    return {"id": f"{prefix}{index}", "question": raw["input"].strip(), "answer": str(target)}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("input", help="raw JSONL file")
    parser.add_argument("--output", help="output JSONL (default: stdout)")
    parser.add_argument("--hard", action="store_true", help="input is GSM-Hard (input/code/target fields)")
    parser.add_argument("--exclude", help="file of ids to drop, one per line")
    parser.add_argument("--id-prefix", default="gsm-", help="prefix of generated ids")
    args = parser.parse_args()

    excluded = set()
    if args.exclude:
        with open(args.exclude, encoding="utf-8") as f:
            excluded = {line.strip() for line in f if line.strip()}

    convert = gsm_hard_record if args.hard else gsm8k_record
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    kept = 0
    with open(args.input, encoding="utf-8") as f:
        for index, line in enumerate(line for line in f if line.strip()):
            record = convert(index, json.loads(line), args.id_prefix)
            if record["id"] in excluded:
                continue
            if not re.search(r"\d", record["answer"]):
                print(f"skipping {record['id']}: non-numeric answer", file=sys.stderr)
                continue
            out.write(json.dumps(record, ensure_ascii=False) + "\n")
            kept += 1
    print(f"wrote {kept} instances", file=sys.stderr)


if __name__ == "__main__":
    main()
