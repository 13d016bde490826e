#!/usr/bin/env python3
# Copyright (C) 2026 lim contributors
# SPDX-License-Identifier: Apache-2.0
"""Plot cumulative recall from `lim replay/generate` or `lim ablate` CSV output.

    lim replay --trace t.trc --out a.csv
    python3 tools/plot_recall.py a.csv b.csv -o recall.png
"""
import argparse
import csv

import matplotlib.pyplot as plt


def read_curves(path):
    with open(path, newline="") as f:
        schema = f.readline().strip().removeprefix("# schema=")
        rows = list(csv.DictReader(f))
    curves = {}
    if schema == "lim.recall.v1":
        steps = [r for r in rows if r["kind"] == "step"]
        if steps:
            label = f"{path}: {steps[0]['policy']} K={steps[0]['budget']} r={steps[0]['ratio']}"
            curves[label] = [(int(r["step"]), float(r["cum_recall"])) for r in steps]
    elif schema == "lim.ablate.v1":
        for r in rows:
            curves.setdefault(f"{path}: r={r['ratio']}", []).append((int(r["step"]), float(r["cum_recall"])))
    else:
        raise SystemExit(f"{path}: unknown schema {schema!r}")
    return curves


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv", nargs="+")
    ap.add_argument("-o", "--out", default="recall.png")
    args = ap.parse_args()
    for path in args.csv:
        for label, pts in read_curves(path).items():
            plt.plot([s for s, _ in pts], [c for _, c in pts], label=label)
    plt.xlabel("decode step")
    plt.ylabel("cumulative recall")
    plt.ylim(0, 1.02)
    plt.legend(fontsize="small")
    plt.savefig(args.out, dpi=120, bbox_inches="tight")


if __name__ == "__main__":
    main()
