#!/usr/bin/env python3
"""Independent per-split record count for GSM-8K jsonl files.

Counts non-blank lines and checks each parses as JSON with a '####' answer
marker. Prints one "split count" line per file and a total; with --manifest,
exits 1 when a count disagrees with the pinned value.
"""
import argparse
import json
import pathlib
import sys


def count(path):
    n = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            record = json.loads(line)
            if "####" not in record.get("answer", ""):
                sys.exit(f"{path}:{lineno}: no #### marker")
            n += 1
    return n


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("gsm8k_dir", type=pathlib.Path)
    ap.add_argument("--manifest", type=pathlib.Path)
    args = ap.parse_args()

    pinned = {}
    if args.manifest:
        for e in json.loads(args.manifest.read_text())["entries"]:
            if e["dataset"] == "gsm8k":
                pinned[e["path"]] = e.get("count")

    total, ok = 0, True
    for split in ("train", "test"):
        name = f"{split}.jsonl"
        n = count(args.gsm8k_dir / name)
        total += n
        expected = pinned.get(name)
        mark = "" if expected is None else (" ok" if expected == n else f" MISMATCH (manifest {expected})")
        ok &= expected is None or expected == n
        print(f"{split} {n}{mark}")
    print(f"total {total}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
