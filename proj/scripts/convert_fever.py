#!/usr/bin/env python3
"""Convert the BIG-bench FEVER task into the canonical pdlopt dataset format.

BIG-bench keeps only claims and labels. Evidence articles are recovered by
joining on claim text with the original FEVER JSONL. Article summaries and
sentences come from the FEVER wiki-pages dump when --wiki-pages is given.
"""

import argparse
import glob
import json
import os
import sys

BRACKETS = {"-LRB-": "(", "-RRB-": ")", "-LSB-": "[", "-RSB-": "]", "-LCB-": "{", "-RCB-": "}", "-COLON-": ":"}


def title_from_page_id(page_id):
    for token, char in BRACKETS.items():
        page_id = page_id.replace(token, char)
    return page_id.replace("_", " ")


def bigbench_examples(path):
    with open(path, encoding="utf-8") as f:
        task = json.load(f)
    for example in task["examples"]:
        scores = example["target_scores"]
        label = max(scores, key=scores.get).strip().lower()
        if label in ("true", "false"):
            yield example["input"].strip(), label


def original_evidence(path):
    """claim -> list of (page id, sentence index) in annotation order."""
    evidence = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            raw = json.loads(line)
            pairs = evidence.setdefault(raw["claim"].strip(), [])
            for group in raw.get("evidence", []):
                for _annotation, _evidence_id, page, sentence in group:
                    if page is not None and (page, sentence) not in pairs:
                        pairs.append((page, sentence))
    return evidence


def load_pages(directory, wanted):
    pages = {}
    for path in sorted(glob.glob(os.path.join(directory, "*.jsonl"))):
        with open(path, encoding="utf-8") as f:
            for line in f:
                raw = json.loads(line)
                if raw["id"] not in wanted:
                    continue
                sentences = {}
                for row in raw.get("lines", "").split("\n"):
                    number, _, text = row.partition("\t")
                    if number.isdigit():
                        sentences[int(number)] = text.split("\t")[0]
                pages[raw["id"]] = sentences
    return pages


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("bigbench", help="BIG-bench FEVER task.json")
    parser.add_argument("original", help="original FEVER JSONL (claim, label, evidence)")
    parser.add_argument("--wiki-pages", help="directory of FEVER wiki-pages JSONL files")
    parser.add_argument("--output", help="output JSONL (default: stdout)")
    parser.add_argument("--id-prefix", default="fever-", help="prefix of generated ids")
    args = parser.parse_args()

    evidence = original_evidence(args.original)
    examples = list(bigbench_examples(args.bigbench))
    wanted = {page for claim, _ in examples for page, _ in evidence.get(claim, [])}
    pages = load_pages(args.wiki_pages, wanted) if args.wiki_pages else {}

    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    joined = 0
    for index, (claim, label) in enumerate(examples):
        record = {"id": f"{args.id_prefix}{index}", "question": claim, "answer": label}
        articles = []
        for page, sentence in evidence.get(claim, []):
            title = title_from_page_id(page)
            article = next((a for a in articles if a["title"] == title), None)
            if article is None:
                article = {"title": title}
                lines = pages.get(page)
                if lines:
                    article["summary"] = lines.get(0, "")
                    article["sentences"] = []
                articles.append(article)
            text = pages.get(page, {}).get(sentence)
            if text and text not in article["sentences"]:
                article["sentences"].append(text)
        if articles:
            record["evidence"] = articles
            joined += 1
        out.write(json.dumps(record, ensure_ascii=False) + "\n")
    print(f"wrote {len(examples)} instances, {joined} with evidence", file=sys.stderr)


if __name__ == "__main__":
    main()
