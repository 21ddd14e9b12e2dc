#!/usr/bin/env python3
"""Materialize the MovieLens 100k benchmark in its canonical layout.

Downloads the `recbole` wheel (which redistributes the full dataset), and
converts its tab-separated tables into the canonical `u.data` /`u.item`
files this package's loader expects.  Usage:

    python scripts/prepare_ml100k.py [--dest data/ml-100k] [--index-url URL]

The wheel is fetched with `pip download`; pass --index-url to point at a
mirror if the default index is not reachable.
"""

from __future__ import annotations

import argparse
import glob
import os
import subprocess
import sys
import tempfile
import zipfile

GENRE_ORDER = [
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
    "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
    "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
]


def fetch_wheel(workdir: str, index_url: str | None) -> str:
    cmd = [sys.executable, "-m", "pip", "download", "--no-deps", "recbole", "-d", workdir]
    if index_url:
        cmd += ["--index-url", index_url]
    subprocess.run(cmd, check=True)
    wheels = glob.glob(os.path.join(workdir, "recbole-*.whl"))
    if not wheels:
        raise SystemExit("pip download completed but no recbole wheel found")
    return wheels[0]


def convert(wheel_path: str, dest: str) -> None:
    base = "recbole/dataset_example/ml-100k/"
    with zipfile.ZipFile(wheel_path) as zf:
        inter = zf.read(base + "ml-100k.inter").decode("utf-8").splitlines()
        items = zf.read(base + "ml-100k.item").decode("utf-8").splitlines()

    os.makedirs(dest, exist_ok=True)
    with open(os.path.join(dest, "u.data"), "w", encoding="latin-1") as out:
        for line in inter[1:]:
            if not line:
                continue
            user, item, rating, ts = line.split("\t")
            out.write(f"{int(user)}\t{int(item)}\t{int(float(rating))}\t{int(float(ts))}\n")

    with open(os.path.join(dest, "u.item"), "w", encoding="latin-1") as out:
        for line in items[1:]:
            if not line:
                continue
            fields = line.split("\t")
            item_id, title = fields[0], fields[1]
            year = fields[2] if len(fields) > 2 else ""
            classes = set(fields[3].split(" ")) if len(fields) > 3 and fields[3] else set()
            flags = [str(int(g in classes)) for g in GENRE_ORDER]
            shown = f"{title} ({year})" if year else title
            out.write("|".join([item_id, shown, "", "", ""] + flags) + "\n")

    n_ratings = sum(1 for line in inter[1:] if line)
    n_items = sum(1 for line in items[1:] if line)
    print(f"wrote {dest}/u.data ({n_ratings} ratings) and {dest}/u.item ({n_items} items)")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dest", default=os.path.join("data", "ml-100k"))
    parser.add_argument("--index-url", default=None)
    args = parser.parse_args()
    with tempfile.TemporaryDirectory() as workdir:
        wheel = fetch_wheel(workdir, args.index_url)
        convert(wheel, args.dest)


if __name__ == "__main__":
    main()
