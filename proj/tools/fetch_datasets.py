#!/usr/bin/env python3
"""Download the Ionosphere and Pima benchmark datasets and write them in the
canonical driftwatch CSV layout (f0..fN,label with label 1 = anomaly).

Usage: python3 tools/fetch_datasets.py [output_dir]   (default: data/)

Row counts and anomaly rates are verified against the published statistics
(Ionosphere 351x33 with 126 anomalies, Pima 768x8 with 268) before anything
is written. Network access is required.
"""

import csv
import io
import sys
import urllib.request
from pathlib import Path

IONOSPHERE_URLS = [
    "https://archive.ics.uci.edu/ml/machine-learning-databases/ionosphere/ionosphere.data",
    "https://raw.githubusercontent.com/jbrownlee/Datasets/master/ionosphere.csv",
]
PIMA_URLS = [
    "https://raw.githubusercontent.com/jbrownlee/Datasets/master/pima-indians-diabetes.data.csv",
]


def fetch(urls):
    last_err = None
    for url in urls:
        try:
            print(f"fetching {url}")
            with urllib.request.urlopen(url, timeout=60) as response:
                return response.read().decode("utf-8")
        except Exception as err:  # try the next mirror
            print(f"  failed: {err}")
            last_err = err
    raise RuntimeError(f"all mirrors failed: {last_err}")


def parse_ionosphere(text):
    rows = []
    for line in csv.reader(io.StringIO(text)):
        if not line:
            continue
        *features, label = line
        # column 1 of the raw data is constantly zero; drop it so the
        # feature count matches the published 33-dimensional layout
        features = [float(v) for v in features]
        del features[1]
        rows.append((features, 1 if label.strip() in ("b", "1") else 0))
    return rows


def parse_pima(text):
    rows = []
    for line in csv.reader(io.StringIO(text)):
        if not line or line[0].lower().startswith("preg"):
            continue
        values = [float(v) for v in line]
        rows.append((values[:-1], 1 if values[-1] != 0 else 0))
    return rows


def verify(name, rows, n, d, anomalies):
    got_n, got_d = len(rows), len(rows[0][0])
    got_anom = sum(label for _, label in rows)
    if (got_n, got_d, got_anom) != (n, d, anomalies):
        raise RuntimeError(
            f"{name}: expected {n}x{d} with {anomalies} anomalies, "
            f"got {got_n}x{got_d} with {got_anom}"
        )


def write_csv(path, rows):
    d = len(rows[0][0])
    with open(path, "w", newline="") as out:
        writer = csv.writer(out)
        writer.writerow([f"f{j}" for j in range(d)] + ["label"])
        for features, label in rows:
            writer.writerow([repr(v) for v in features] + [label])
    print(f"wrote {path} ({len(rows)} rows, {d} features)")


def main():
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data"
    out_dir.mkdir(parents=True, exist_ok=True)

    ionosphere = parse_ionosphere(fetch(IONOSPHERE_URLS))
    verify("ionosphere", ionosphere, 351, 33, 126)
    write_csv(out_dir / "ionosphere.csv", ionosphere)

    pima = parse_pima(fetch(PIMA_URLS))
    verify("pima", pima, 768, 8, 268)
    write_csv(out_dir / "pima.csv", pima)


if __name__ == "__main__":
    main()
