"""Desk-scale end-to-end run: generate, split, train both approaches, bench.

Each stage is skipped when its output already exists, so an interrupted run
resumes where it stopped.  Stage stdout is kept next to the outputs.
"""
from __future__ import annotations

import contextlib
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .cli import main

log = logging.getLogger(__name__)


@dataclass
class DeskRun:
    out_dir: Path
    n_samples: int = 2400
    gen_seed: int = 1
    split_seed: int = 0
    train_seed: int = 0
    bench_seed: int = 0
    config: str | None = None

    @property
    def raw(self) -> Path:
        return self.out_dir / "data.bin"

    @property
    def dataset(self) -> Path:
        return self.out_dir / "data_split.bin"

    @property
    def model1(self) -> Path:
        return self.out_dir / "approach1.json"

    @property
    def model2(self) -> Path:
        return self.out_dir / "approach2.json"

    @property
    def bench(self) -> Path:
        return self.out_dir / "bench.json"

    def bench_result(self) -> dict:
        return json.loads(self.bench.read_text())


def _stage(run: DeskRun, name: str, argv: list, target: Path, force: bool) -> None:
    if target.exists() and not force:
        log.info("%s: %s exists, skipping", name, target)
        return
    if run.config:
        argv = [*argv, "--config", run.config]
    log.info("%s: satbeam %s", name, " ".join(argv))
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        rc = main(argv)
    (run.out_dir / f"{name}.out").write_text(buf.getvalue())
    if rc != 0:
        raise RuntimeError(f"stage {name} failed with exit code {rc}")


def run_pipeline(run: DeskRun, force: bool = False) -> dict:
    run.out_dir.mkdir(parents=True, exist_ok=True)
    d = run.out_dir
    _stage(run, "gen", ["gen-data", "-n", str(run.n_samples), "--seed", str(run.gen_seed), "-o", str(run.raw), "-v"],
           run.raw, force)
    _stage(run, "split", ["split", str(run.raw), "--seed", str(run.split_seed), "-o", str(run.dataset)],
           run.dataset, force)
    _stage(run, "train1", ["train", str(run.dataset), "--approach", "1", "--seed", str(run.train_seed),
                           "-o", str(run.model1)], run.model1, force)
    _stage(run, "train2", ["train", str(run.dataset), "--approach", "2", "--seed", str(run.train_seed),
                           "-o", str(run.model2)], run.model2, force)
    _stage(run, "bench", ["bench", str(run.dataset), "--model1", str(run.model1), "--model2", str(run.model2),
                          "--seed", str(run.bench_seed), "-o", str(d / "bench"), "-v"], run.bench, force)
    return run.bench_result()
