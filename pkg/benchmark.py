# benchmark.py
"""
Seeded Monte Carlo comparison of the estimators on random systems.

Replicate r draws everything from SeedSequence([master_seed, r]), spawned
into three streams (system, sampling, EM initialization), so every
non-timing output is a function of the configuration alone. One sequence of
max(N)+1 labels is sampled per replicate; size N uses its first N+1 labels
(N consecutive pairs) for every arm.
"""

import asyncio
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

import constants as C
from hmm_core.errors import HmmError, RandomSystemError
from hmm_core.estimators import estimate_em, estimate_mm, estimate_two_step
from hmm_core.markov import SeedLike, make_rng, sample, stationary_distribution, validate_model
from hmm_core.models import (
    BenchmarkConfig,
    BenchmarkRow,
    EstimationReport,
    HmmModel,
    ObservationSequence,
    PolytopeBound,
)
from hmm_core.ports import ResultStore
from result_store import CsvResultStore

logger = logging.getLogger(__name__)


def generate_random_system(num_states: int, num_outputs: int, seed: SeedLike = None) -> HmmModel:
    """
    P = row-normalize(I + U/X), B = row-normalize([I 0] + U'/Y) with uniform
    U, U'; pi0 uniform. Redrawn until the model passes the assumption1 checks.
    """
    rng = make_rng(seed)
    x, y = num_states, num_outputs
    for attempt in range(1, C.RANDOM_SYSTEM_RETRIES + 1):
        P = np.eye(x) + rng.random((x, x)) / x
        P = P / P.sum(axis=1, keepdims=True)
        B = np.eye(x, y) + rng.random((x, y)) / y
        B = B / B.sum(axis=1, keepdims=True)
        model = HmmModel(P=P, B=B, pi0=np.full(x, 1.0 / x))

        report = validate_model(model, "assumption1")
        if report.passed:
            return model
        logger.debug(f"Random system attempt {attempt} rejected: {report.failures}")

    raise RandomSystemError(
        f"no valid random system with X={x}, Y={y} after {C.RANDOM_SYSTEM_RETRIES} attempts"
    )


def default_bound(model: HmmModel) -> PolytopeBound:
    """A tenth of the smallest stationary probability, for every state."""
    pi = stationary_distribution(model.P)
    lower = np.full(model.num_states, pi.min() * C.DEFAULT_BOUND_FRACTION)
    return PolytopeBound(lower=lower)


def rmse(P_hat: np.ndarray, P_true: np.ndarray) -> float:
    """‖P_hat − P_true‖_F / X."""
    P_hat, P_true = np.asarray(P_hat, dtype=float), np.asarray(P_true, dtype=float)
    if P_hat.shape != P_true.shape:
        raise ValueError(f"shape mismatch: {P_hat.shape} vs {P_true.shape}")
    return float(np.linalg.norm(P_hat - P_true) / P_true.shape[0])


def replicate_seeds(master_seed: int, replicate: int) -> Tuple[np.random.SeedSequence, ...]:
    system, sampling, em_init = np.random.SeedSequence([master_seed, replicate]).spawn(3)
    return system, sampling, em_init


def replicate_seed_value(master_seed: int, replicate: int) -> int:
    return int(np.random.SeedSequence([master_seed, replicate]).generate_state(1)[0])


def random_initial_P(num_states: int, seed: SeedLike = None) -> np.ndarray:
    """Rows drawn uniformly from the simplex (Dirichlet(1, ..., 1))."""
    rng = make_rng(seed)
    P = rng.dirichlet(np.ones(num_states), size=num_states)
    P = np.maximum(P, np.finfo(float).tiny)
    return P / P.sum(axis=1, keepdims=True)


def smoothed_start(P: np.ndarray, weight: float = C.EM_START_SMOOTHING) -> np.ndarray:
    """(1 − w)·P + w/X, strictly positive for any stochastic P."""
    P = np.asarray(P, dtype=float)
    return (1.0 - weight) * P + weight / P.shape[0]


def run_arm(
    arm: str,
    obs: ObservationSequence,
    model: HmmModel,
    bound: PolytopeBound,
    random_init: np.ndarray,
    config: BenchmarkConfig,
) -> EstimationReport:
    B, pi0 = model.B, model.pi0
    if arm == C.METHOD_MM:
        return estimate_mm(obs, B, pi0, bound)
    if arm == C.METHOD_TWO_STEP:
        return estimate_two_step(obs, B, pi0, bound)
    if arm == C.METHOD_EM:
        return estimate_em(obs, B, pi0, random_init, config.em_tol, config.em_max_iter, method=arm)
    if arm == C.METHOD_EM_MM:
        start = smoothed_start(estimate_mm(obs, B, pi0, bound).P_hat)
        return estimate_em(obs, B, pi0, start, config.em_tol, config.em_max_iter, method=arm)
    if arm == C.METHOD_EM_TRUE:
        return estimate_em(obs, B, pi0, model.P, config.em_tol, config.em_max_iter, method=arm)
    raise ValueError(f"unknown estimator arm '{arm}'")


def run_replicate(config: BenchmarkConfig, replicate: int) -> List[Dict[str, object]]:
    """All arms on all sizes for one replicate; one raw row per (N, arm)."""
    system_seq, sampling_seq, init_seq = replicate_seeds(config.master_seed, replicate)
    seed_value = replicate_seed_value(config.master_seed, replicate)

    model = generate_random_system(config.num_states, config.num_outputs, system_seq)
    bound = default_bound(model)
    full_obs, _ = sample(model, max(config.sample_sizes) + 1, sampling_seq)
    random_init = random_initial_P(config.num_states, init_seq)

    rows: List[Dict[str, object]] = []
    for n in config.sample_sizes:
        obs = full_obs.prefix(n + 1)
        for arm in config.arms:
            row: Dict[str, object] = {
                "replicate": replicate,
                "seed": seed_value,
                C.N_COLUMN_NAME: n,
                "arm": arm,
            }
            start = time.perf_counter()
            try:
                report = run_arm(arm, obs, model, bound, random_init, config)
                row["seconds"] = time.perf_counter() - start
                row.update(
                    rmse=rmse(report.P_hat, model.P),
                    status=C.STATUS_OK,
                    non_nd_hessian=report.non_nd_hessian,
                    iterations=report.iterations or 0,
                    data_passes=report.data_passes,
                    message="",
                )
            except (HmmError, ValueError, np.linalg.LinAlgError) as e:
                row["seconds"] = time.perf_counter() - start
                logger.warning(f"⚠️ Replicate {replicate}, N={n}, {arm} failed: {e}")
                row.update(
                    rmse=np.nan,
                    status=C.STATUS_FAILED,
                    non_nd_hessian=False,
                    iterations=0,
                    data_passes=0,
                    message=str(e),
                )
            rows.append(row)
    return rows


def median_rows(raw: pd.DataFrame, sample_sizes: List[int], arms: List[str]) -> List[BenchmarkRow]:
    """Per-(N, arm) medians over the completed replicates."""
    completed = raw[raw["status"] == C.STATUS_OK]
    medians = completed.groupby([C.N_COLUMN_NAME, "arm"])[["rmse", "seconds"]].median()

    rows = []
    for n in sample_sizes:
        rmse_by_arm: Dict[str, float] = {}
        seconds_by_arm: Dict[str, float] = {}
        for arm in arms:
            if (n, arm) in medians.index:
                rmse_by_arm[arm] = float(medians.loc[(n, arm), "rmse"])
                seconds_by_arm[arm] = float(medians.loc[(n, arm), "seconds"])
        rows.append(BenchmarkRow(N=n, rmse=rmse_by_arm, seconds=seconds_by_arm))
    return rows


def medians_frame(rows: List[BenchmarkRow]) -> pd.DataFrame:
    return pd.DataFrame([row.to_dict() for row in rows], columns=C.MEDIAN_COLUMNS)


async def run_benchmark_async(
    config: BenchmarkConfig,
    store: Optional[ResultStore] = None,
    status_callback: Optional[Callable[[str], None]] = None,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Runs every replicate (in a process pool when config.workers > 1), stores
    the median and raw tables and returns them.
    """

    def report_status(message: str):
        logger.info(message)
        if status_callback:
            status_callback(message)

    report_status(
        f"🚀 Benchmark X={config.num_states}, Y={config.num_outputs}: "
        f"{config.replicates} replicates, sizes {config.sample_sizes}, arms {config.arms}"
    )

    if config.workers > 1:
        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [
                loop.run_in_executor(pool, run_replicate, config, r)
                for r in range(config.replicates)
            ]
            results = await asyncio.gather(*futures)
        report_status(f"All {config.replicates} replicates finished on {config.workers} workers.")
    else:
        results = []
        for r in range(config.replicates):
            results.append(run_replicate(config, r))
            report_status(f"Replicate {r + 1}/{config.replicates} done.")
            await asyncio.sleep(0)

    raw = pd.DataFrame([row for rows in results for row in rows], columns=C.RAW_COLUMNS)
    medians = medians_frame(median_rows(raw, config.sample_sizes, config.arms))

    failures = int((raw["status"] != C.STATUS_OK).sum())
    if failures:
        logger.warning(f"⚠️ {failures} of {len(raw)} estimator runs failed; see the raw table.")

    store = store or CsvResultStore(config.output_dir, config.num_states, config.num_outputs)
    store.save_medians(medians)
    store.save_raw(raw)
    report_status("✅ Benchmark tables written.")
    return medians, raw


def run_benchmark(
    config: BenchmarkConfig,
    store: Optional[ResultStore] = None,
    status_callback: Optional[Callable[[str], None]] = None,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Synchronous wrapper for run_benchmark_async."""
    return asyncio.run(run_benchmark_async(config, store, status_callback))
