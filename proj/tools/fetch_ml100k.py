#!/usr/bin/env python3
"""Fetch the MovieLens 100K ratings file into data/ml-100k/u.data.

grouplens.org is tried first. When it is unreachable, the copy bundled in the
RecBole wheel on PyPI (dataset_example/ml-100k/ml-100k.inter) is used; it holds
the same 100000 rows in u.data order behind a one-line header.
"""
import argparse
import glob
import io
import os
import subprocess
import sys
import tempfile
import urllib.request
import zipfile

GROUPLENS = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"


def from_grouplens():
    with urllib.request.urlopen(GROUPLENS, timeout=30) as resp:
        blob = resp.read()
    with zipfile.ZipFile(io.BytesIO(blob)) as z:
        return z.read("ml-100k/u.data").decode()


def from_recbole():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps",
                        "--quiet", "-d", tmp, "recbole==1.2.1"], check=True)
        wheel = glob.glob(os.path.join(tmp, "recbole-*.whl"))[0]
        with zipfile.ZipFile(wheel) as z:
            text = z.read("recbole/dataset_example/ml-100k/ml-100k.inter").decode()
    lines = text.splitlines()
    if lines and lines[0].startswith("user_id"):
        lines = lines[1:]
    return "\n".join(lines) + "\n"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "ml-100k", "u.data"))
    args = ap.parse_args()
    if os.path.exists(args.out):
        print(f"{args.out} already present")
        return
    try:
        text = from_grouplens()
    except Exception as err:  # noqa: BLE001
        print(f"grouplens unreachable ({err}); using the RecBole wheel copy")
        text = from_recbole()
    rows = [l for l in text.splitlines() if l.strip()]
    if len(rows) != 100000:
        sys.exit(f"expected 100000 ratings, got {len(rows)}")
    os.makedirs(os.path.dirname(args.out), exist_ok=True)
    with open(args.out, "w") as f:
        f.write("\n".join(rows) + "\n")
    print(f"wrote {len(rows)} ratings to {args.out}")


if __name__ == "__main__":
    main()
