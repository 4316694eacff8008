"""Active-learning run driver.

Candidate-free mode scores the whole pool with the untrained network, labels
the first batch, trains, and repeats. Candidate mode instead labels a random
initial set, trains a candidate model on it (timed separately), and then
runs the same loop.
"""

from __future__ import annotations

import datetime as _dt
import functools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .acquisition import Mode, phase_for, select, select_random
from .config import ConfigError, DatasetConfig, RunConfig, RunMode, derive_seed
from .datasets import Dataset, load_cifar10, load_idx, load_synth, make_imbalanced, synth_blobs
from .pool import Oracle, commit_batch, new_pool
from .report import IterationRecord, ReplicateResult, RunReport

log = logging.getLogger(__name__)


@functools.lru_cache(maxsize=4)
def _load_files(dcfg: DatasetConfig) -> tuple[Dataset, Dataset]:
    if dcfg.kind == "cifar10":
        return load_cifar10(dcfg.path)
    if dcfg.kind == "idx":
        train = load_idx(dcfg.train_images, dcfg.train_labels, split="train")
        test = load_idx(dcfg.test_images, dcfg.test_labels, num_classes=train.num_classes, split="test")
        return train, test
    train, test, _ = load_synth(dcfg.path)
    return train, test


def load_data(dcfg: DatasetConfig, master_seed: int) -> tuple[Dataset, Dataset, int]:
    """Materialize (train, test, data seed) for one replicate."""
    data_seed = dcfg.seed if dcfg.seed is not None else derive_seed(master_seed, "data")
    if dcfg.kind == "synth":
        train, test = synth_blobs(dcfg.classes, dcfg.n_per_class, dcfg.dim, dcfg.separation, dcfg.noise, data_seed)
    else:
        train, test = _load_files(dcfg)
    if dcfg.imbalance is not None:
        train = make_imbalanced(train, dcfg.imbalance, derive_seed(data_seed, "imbalance"))
    return train, test, data_seed


def _preprocessing(dcfg: DatasetConfig) -> str:
    return "none" if dcfg.kind in ("synth", "synth_dir") else "pixels/255, no standardization"


def run_replicate(cfg: RunConfig, replicate: int) -> ReplicateResult:
    master = cfg.seed + replicate
    train_set, test_set, data_seed = load_data(cfg.dataset, master)
    spec = nn.preset(cfg.network, train_set.input_shape, train_set.num_classes)
    x = train_set.features
    pool = new_pool(len(train_set))
    oracle = Oracle(train_set.labels, cfg.budget.total)
    init_seed = derive_seed(master, "init")
    model = nn.init_random(spec, init_seed)
    seeds = {"master": master, "init": init_seed, "data": data_seed}

    def fit(model, i):
        tcfg = replace(cfg.train, shuffle_seed=derive_seed(master, "shuffle", i))
        t0 = time.perf_counter()
        model = nn.train(model, x[pool.labeled], oracle.labels_for(pool.labeled), tcfg)
        return model, time.perf_counter() - t0

    records: list[IterationRecord] = []
    candidate = None
    candidate_s = None
    i = 0
    if cfg.mode is RunMode.CANDIDATE:
        n = cfg.budget.next_size(0, pool.unlabeled.size)
        t0 = time.perf_counter()
        batch = select_random(pool.unlabeled, n, derive_seed(master, "select", 0), 0)
        sel_s = time.perf_counter() - t0
        pool = commit_batch(pool, batch, oracle)
        model, candidate_s = fit(model, 0)
        candidate = model
        acc = nn.evaluate(model, test_set.features, test_set.labels)
        records.append(IterationRecord(0, Mode.RANDOM.value, n, oracle.issued, sel_s, 0.0, acc))
        i = 1

    while (n := cfg.budget.next_size(oracle.issued, pool.unlabeled.size)) > 0:
        phase = phase_for(cfg.strategy, i)
        t0 = time.perf_counter()
        if phase is Mode.RANDOM:
            batch = select_random(pool.unlabeled, n, derive_seed(master, "select", i), i)
        else:
            scorer = candidate if (candidate is not None and cfg.candidate_scoring == "candidate") else model
            probs = nn.forward_probs(scorer, x[pool.unlabeled])
            batch = select(phase, pool.unlabeled, n, probs=probs, iteration=i)
        sel_s = time.perf_counter() - t0
        pool = commit_batch(pool, batch, oracle)
        model, train_s = fit(model, i)
        acc = nn.evaluate(model, test_set.features, test_set.labels)
        records.append(IterationRecord(i, phase.value, n, oracle.issued, sel_s, train_s, acc))
        log.info("rep %d iter %d %s labels=%d acc=%.4f", replicate, i, phase.value, oracle.issued, acc)
        i += 1

    history = [b.ids.tolist() for b in pool.history]
    return ReplicateResult(replicate, seeds, records, history, candidate_s)


def _assemble(cfg: RunConfig, results: Sequence[ReplicateResult], started: float) -> RunReport:
    train_set, _, _ = load_data(cfg.dataset, cfg.seed)
    spec = nn.preset(cfg.network, train_set.input_shape, train_set.num_classes)
    return RunReport(
        config=cfg.to_dict(),
        replicates=list(results),
        network_spec=spec.to_dict(),
        preprocessing=_preprocessing(cfg.dataset),
        metadata={
            "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "elapsed_s": time.perf_counter() - started,
        },
    )


def run(cfg: RunConfig, workers: int = 1) -> RunReport:
    """Run every replicate of ``cfg`` in whichever mode it names."""
    return run_many([cfg], workers)[0]


def run_candidate_free(cfg: RunConfig, workers: int = 1) -> RunReport:
    if cfg.mode is not RunMode.CANDIDATE_FREE:
        raise ConfigError("run_candidate_free needs mode candidate_free")
    return run(cfg, workers)


def run_candidate(cfg: RunConfig, workers: int = 1) -> RunReport:
    if cfg.mode is not RunMode.CANDIDATE:
        raise ConfigError("run_candidate needs mode candidate")
    return run(cfg, workers)


def _job(args):
    cfg, r = args
    return run_replicate(cfg, r)


def run_many(cfgs: Sequence[RunConfig], workers: int = 1) -> list[RunReport]:
    """Run several configs; replicates are independent jobs across ``workers`` processes."""
    started = time.perf_counter()
    jobs = [(cfg, r) for cfg in cfgs for r in range(cfg.replicates)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    reports, pos = [], 0
    for cfg in cfgs:
        reports.append(_assemble(cfg, results[pos : pos + cfg.replicates], started))
        pos += cfg.replicates
    return reports


def replay(report: RunReport) -> RunReport:
    """Re-run the configuration echoed in ``report``."""
    return run(RunConfig.from_dict(report.config))
