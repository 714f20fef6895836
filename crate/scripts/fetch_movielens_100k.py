#!/usr/bin/env python3
"""Fetch MovieLens-100K and rewrite it in the MovieLens-1M "::" layout.

The RecBole wheel on PyPI ships the ML-100K atomic files; this script pulls
the wheel through pip, extracts the user/item/interaction tables and writes
ratings.dat, users.dat and movies.dat (Latin-1) so that `mirec prepare`
can read them with `format = "movielens1m"`.

Usage: scripts/fetch_movielens_100k.py [OUT_DIR]   (default: data/ml-100k)
"""
import glob
import os
import subprocess
import sys
import tempfile
import zipfile

PREFIX = "recbole/dataset_example/ml-100k/ml-100k."


def rows(blob):
    lines = blob.decode("utf-8", errors="replace").splitlines()
    for line in lines[1:]:
        if line.strip():
            yield line.split("\t")


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join("data", "ml-100k")
    os.makedirs(out, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.check_call(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q",
             "recbole==1.2.1", "-d", tmp])
        wheel = glob.glob(os.path.join(tmp, "recbole-*.whl"))[0]
        with zipfile.ZipFile(wheel) as z:
            inter = z.read(PREFIX + "inter")
            item = z.read(PREFIX + "item")
            user = z.read(PREFIX + "user")

    def write(name, lines):
        with open(os.path.join(out, name), "w", encoding="latin-1",
                  errors="replace", newline="\n") as f:
            for line in lines:
                f.write(line + "\n")

    write("ratings.dat", ("::".join(r[:4]).replace(".0::", "::") for r in rows(inter)))
    # users.dat: UserID::Gender::Age::Occupation::Zip-code
    write("users.dat", (f"{u}::{g}::{a}::{o}::{z}" for u, a, g, o, z in rows(user)))
    # movies.dat: MovieID::Title (Year)::Genre|Genre
    movies = []
    for r in rows(item):
        r += [""] * (4 - len(r))
        mid, title, year, genres = r[:4]
        title = f"{title} ({year})" if year.strip() else title
        movies.append(f"{mid}::{title}::{'|'.join(genres.split())}")
    write("movies.dat", movies)
    print(f"wrote MovieLens-1M layout files to {out}")


if __name__ == "__main__":
    main()
