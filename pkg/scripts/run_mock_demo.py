#!/usr/bin/env python3
"""End-to-end demo on synthetic data, exercising the real HTTP stack.

Builds the ten-record scripted VQA fixture, serves its script file from an
in-process OpenAI-compatible server, runs labeling plus all detectors
through the HTTP client, and prints the resulting report. Half of the
hallucinated records are "overconfident" (their sampled answers ignore the
image distortion), which is exactly the failure mode the vision-contrast
score exists to expose.
"""

import argparse
import dataclasses
import tempfile
import time
from pathlib import Path

from univrse import harness
from univrse.backends import MockServer, load_script
from univrse.mockdata import write_vqa_fixture


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=None,
                        help="working directory (default: a temp dir)")
    parser.add_argument("--seed", type=int, default=77)
    parser.add_argument("--workers", type=int, default=4)
    args = parser.parse_args()

    root = args.out or Path(tempfile.mkdtemp(prefix="univrse-demo-"))
    fixture = write_vqa_fixture(root / "fixture", run_seed=args.seed)
    server = MockServer(load_script(fixture.script_path)).start()
    print(f"mock endpoint: {server.url}")
    try:
        spec = harness.BackendSpec(kind="http", endpoint=server.url, model="mock")
        config = dataclasses.replace(
            harness.load_config(fixture.config_path),
            vlm=spec, nli=spec, llm=spec, workers=args.workers,
        )
        records = harness.ingest_dataset(fixture.dataset_path)
        backends = harness.build_backends(config)
        started = time.perf_counter()
        run_dir = harness.run(records, config, backends, root / "run")
        csv_path, summary_path = harness.report(run_dir)
        elapsed = time.perf_counter() - started
    finally:
        server.stop()

    print(summary_path.read_text())
    print(f"records: {run_dir / 'records.jsonl'}")
    print(f"report:  {csv_path}")
    print(f"scored 10 records in {elapsed:.2f}s")


if __name__ == "__main__":
    main()
