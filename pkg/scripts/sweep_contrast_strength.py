#!/usr/bin/env python3
"""Sweep the visual-amplification coefficient lambda over a finished run.

Every run record stores the aligned per-branch class distributions, so the
contrast step can be replayed offline at any lambda without touching a
backend. For each lambda the script recomputes the vision-contrast entropy
per record and reports detection AUC/AUA against the stored labels.

Usage:
    python scripts/run_mock_demo.py --out demo/
    python scripts/sweep_contrast_strength.py demo/run --lambdas 0,0.5,1,2,4
"""

import argparse
import json
from pathlib import Path

from univrse import harness
from univrse.errors import SingleClass
from univrse.metrics import ScoredSample, auc, aua, binarize_label
from univrse.vcse import contrast_distributions, shannon_entropy


def recontrast(records, lam):
    samples = []
    for rec in records:
        if rec.get("error") or rec["task"] != "vqa":
            continue
        vcd = rec["univrse"]["vcd"]
        entropy = shannon_entropy(
            contrast_distributions(vcd["p_orig"], vcd["p_dist"], lam)
        )
        alpha = rec["alfa"]["alpha_h"]
        samples.append(ScoredSample(
            id=rec["id"], confidence=-entropy, alpha_h=alpha,
            binary_halluc=binarize_label(alpha),
        ))
    return samples


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("run_dir", type=Path)
    parser.add_argument("--lambdas", default="0,0.25,0.5,1,2,4",
                        help="comma-separated lambda values")
    args = parser.parse_args()

    records = harness._load_records(args.run_dir)
    lock = json.loads((args.run_dir / "config.lock.json").read_text())
    print(f"run: {args.run_dir}  (configured lambda = {lock['config']['lam']})")
    print(f"{'lambda':>8} {'auc':>8} {'aua':>8}")
    for lam in (float(x) for x in args.lambdas.split(",")):
        samples = recontrast(records, lam)
        try:
            auc_cell = f"{auc(samples):8.4f}"
        except SingleClass:
            auc_cell = "      NA"
        print(f"{lam:8.2f} {auc_cell} {aua(samples):8.4f}")


if __name__ == "__main__":
    main()
