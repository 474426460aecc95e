#!/usr/bin/env python3
"""Materialize a scripted mock dataset (images, dataset.jsonl, script.json,
config.toml) for offline runs, demos, and integration testing.

Usage:
    python scripts/make_mock_fixture.py out/fixture --task vqa --seed 77
    univrse run-vqa out/fixture/dataset.jsonl --config out/fixture/config.toml --out out/run
"""

import argparse
from pathlib import Path

from univrse.mockdata import write_vqa_fixture, write_vrg_fixture


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", type=Path, help="directory to create the fixture in")
    parser.add_argument("--task", choices=["vqa", "vrg"], default="vqa")
    parser.add_argument("--seed", type=int, default=77)
    parser.add_argument("--m-samples", type=int, default=4)
    args = parser.parse_args()

    if args.task == "vqa":
        fx = write_vqa_fixture(args.out, run_seed=args.seed, m_samples=args.m_samples)
    else:
        fx = write_vrg_fixture(args.out, run_seed=args.seed, m_samples=args.m_samples)
    print(f"dataset: {fx.dataset_path}")
    print(f"script:  {fx.script_path}")
    print(f"config:  {fx.config_path}")


if __name__ == "__main__":
    main()
