#!/usr/bin/env python3
"""Writes a copy of a corpus directory with a payload line after every Nth line."""

import argparse
import pathlib


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("source", type=pathlib.Path)
    parser.add_argument("dest", type=pathlib.Path)
    parser.add_argument("--payload", required=True)
    parser.add_argument("--every", type=int, default=4)
    args = parser.parse_args()

    args.dest.mkdir(parents=True, exist_ok=True)
    for path in sorted(args.source.iterdir()):
        if not path.is_file():
            continue
        out = []
        for k, line in enumerate(path.read_bytes().splitlines(keepends=True), 1):
            out.append(line)
            if k % args.every == 0:
                out.append(args.payload.encode() + b"\n")
        (args.dest / path.name).write_bytes(b"".join(out))


if __name__ == "__main__":
    main()
