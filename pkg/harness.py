"""
한줌 실험 하네스
- entropy-study: 엔트로피 추정기 비교 + 단순화 경계 수렴
- plan-bench: 트리 형태별 정확 / 적응형 플래너 시간·밀도 평가 비교
- receding-run: receding horizon 궤적 + 깊이별 단순화 레벨 히스토그램

사용법:
    python harness.py plan-bench --config data/configs/plan_bench.json --out results/bench
"""
import argparse
import json
import logging
import os
import sys
import time
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config import ESS_RESAMPLE_RATIO, EXPERIMENTS, LIKELIHOOD_FLOOR, LOG_LEVEL
from data import EXPERIMENT_FILES, config_path
from services import (
    ConfigError,
    ParticleBelief,
    PlanBudgetExceeded,
    SimplificationSchedule,
    WorldModels,
    boers_entropy,
    build_entropy_cache,
    build_tree,
    config_hash,
    distance_reward,
    effective_sample_size,
    emit_metadata,
    entropy_bounds,
    exact_plan_on_tree,
    expected_distance_to_goal,
    gaussian_entropy,
    kalman_prior,
    kalman_step,
    kde_entropy,
    lc_reward_bounds,
    load_config,
    make_stream,
    naive_weight_entropy,
    plan_on_tree,
    propagate_and_reweight,
    receding_horizon_run,
    refine,
    refine_entropy_bounds,
    simplify,
    simulate_truth_step,
    systematic_resample,
)
from services.beacon_world import ACTION_DIRECTIONS
from services.experiment_config import RunConfig

logger = logging.getLogger(__name__)

# 경로 → 행 수 (메타데이터는 None)
Artifacts = Dict[str, Optional[int]]


def _banner(title: str):
    print("\n" + "=" * 50)
    print(f"  {title}")
    print("=" * 50)


def _write_csv(rows: List[Dict], path: str) -> int:
    pd.DataFrame(rows).to_csv(path, index=False)
    print(f"[OK] {os.path.basename(path)} 저장 완료 ({len(rows)}행)")
    return len(rows)


# ========== entropy-study ==========

def _study_rows(
    base: Dict,
    prev: ParticleBelief,
    next_: ParticleBelief,
    action_vec: np.ndarray,
    z: np.ndarray,
    models: WorldModels,
    config: RunConfig,
    goal: Tuple[float, ...],
    stream_labels: Tuple
) -> List[Dict]:
    """한 스텝의 (고정 비율 + 스케줄 레벨) 경계 행"""
    rows = []
    lc_reward = None
    if config.lipschitz is not None:
        lc_reward = distance_reward(goal, config.lipschitz)

    def row(mode, fraction, level, bounds, view_next):
        entry = {
            **base, "mode": mode, "fraction": fraction, "level": level,
            "lower": bounds.lower, "upper": bounds.upper, "width": bounds.width,
        }
        if lc_reward is not None:
            lc = lc_reward_bounds(lc_reward, next_, view_next)
            entry.update({"lc_lower": lc.lower, "lc_upper": lc.upper})
        return entry

    # 고정 비율: 레벨 하나짜리 스케줄
    for fraction in config.study_fractions:
        schedule = SimplificationSchedule((fraction, 1.0)) if fraction < 1.0 else SimplificationSchedule((1.0,))
        view_prev = simplify(prev, schedule, 0, make_stream(*stream_labels, "prev", str(fraction)))
        view_next = simplify(next_, schedule, 0, make_stream(*stream_labels, "next", str(fraction)))
        bounds = entropy_bounds(view_prev, view_next, prev, next_, action_vec, z, models)
        rows.append(row("fraction", fraction, 0, bounds, view_next))

    # 스케줄 레벨: 캐시 재사용 체인
    schedule = config.simplification
    view_prev = simplify(prev, schedule, 0, make_stream(*stream_labels, "prev"))
    view_next = simplify(next_, schedule, 0, make_stream(*stream_labels, "next"))
    bounds, cache = build_entropy_cache(view_prev, view_next, prev, next_, action_vec, z, models)
    rows.append(row("schedule", view_next.fraction, 0, bounds, view_next))
    for level in range(1, schedule.finest + 1):
        view_prev, added_prev = refine(view_prev, prev, schedule)
        view_next, added_next = refine(view_next, next_, schedule)
        bounds, cache = refine_entropy_bounds(cache, added_prev, added_next, prev, next_, models)
        rows.append(row("schedule", view_next.fraction, level, bounds, view_next))
    return rows


def run_entropy_study(config: RunConfig, out_dir: str, seed_offset: int = 0) -> Tuple[Artifacts, str]:
    """칼만 / Boers / KDE / naive 엔트로피와 레벨별 경계 (long format CSV)"""
    _banner("한줌 - 엔트로피 근사 실험")
    digest = config_hash(config)
    rows = []

    for world in config.worlds:
        for n in config.particle_counts:
            for seed in config.seeds_with_offset(seed_offset):
                models = WorldModels.from_config(world)
                start = np.asarray(world.start, dtype=float)
                truth_rng = make_stream(seed, "truth", n)
                truth = start + world.sigma_0 * truth_rng.standard_normal(start.shape)
                belief = ParticleBelief.from_gaussian(start, world.sigma_0, n, make_stream(seed, "prior", n))
                kf = kalman_prior(world)

                for step in range(config.steps):
                    name = world.trajectory[step % len(world.trajectory)]
                    action_vec = np.array(ACTION_DIRECTIONS[name]) * world.step_length
                    truth, z = simulate_truth_step(truth, action_vec, models, truth_rng)
                    next_belief = propagate_and_reweight(
                        belief, action_vec, z, models.transition, models.sensor,
                        make_stream(seed, "filter", n, step), floor=LIKELIHOOD_FLOOR
                    )
                    kf = kalman_step(kf, action_vec, z, models)

                    base = {
                        "config_hash": digest, "world": world.name, "n_particles": n, "seed": seed,
                        "step": step, "action": name,
                        "kf_entropy": gaussian_entropy(kf),
                        "boers": boers_entropy(belief, next_belief, action_vec, z, models).value,
                        "kde": kde_entropy(next_belief),
                        "naive": naive_weight_entropy(next_belief),
                        "distance": expected_distance_to_goal(next_belief, world.goal),
                    }
                    rows.extend(_study_rows(
                        base, belief, next_belief, action_vec, z, models, config, world.goal, (seed, "study", n, step)
                    ))

                    if effective_sample_size(next_belief) < ESS_RESAMPLE_RATIO * n:
                        next_belief = systematic_resample(next_belief, make_stream(seed, "resample", n, step))
                    belief = next_belief

                print(f"   {world.name} N={n} seed={seed}: {config.steps} 스텝 완료")

    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "entropy_study.csv")
    return {path: _write_csv(rows, path)}, "ok"


# ========== plan-bench ==========

def run_plan_bench(config: RunConfig, out_dir: str, seed_offset: int = 0) -> Tuple[Artifacts, str]:
    """(world, builder, N, L) 셀마다 정확 / 적응형 플래너 비교"""
    _banner("한줌 - 플래닝 벤치마크")
    digest = config_hash(config)
    schedule = config.simplification
    rows = []
    status = "ok"

    for world in config.worlds:
        for builder in config.builders:
            for n in config.particle_counts:
                for horizon in config.horizons_for(builder):
                    cell = f"{world.name}/{builder}/N={n}/L={horizon}"
                    over_budget = False
                    for seed in config.seeds_with_offset(seed_offset):
                        base = {
                            "config_hash": digest, "world": world.name, "builder": builder,
                            "n_particles": n, "horizon": horizon, "seed": seed,
                        }
                        if over_budget:
                            rows.append({**base, "status": "budget_exceeded"})
                            continue
                        try:
                            row = _bench_cell(world, builder, n, horizon, seed, schedule, config)
                        except Exception as e:
                            logger.exception("셀 실패: %s seed=%d", cell, seed)
                            print(f"[ERROR] {cell} seed={seed}: {e}")
                            rows.append({**base, "status": f"failed: {e}"})
                            status = "partial"
                            continue

                        if row["status"] == "budget_exceeded":
                            # 남은 seed 는 건너뜀
                            over_budget = True
                            status = "partial"
                            print(f"[WARN] {cell}: 정확 플래너 {row['exact_time']:.2f}s 에서 중단 (제한 {config.time_budget:g}s)")
                        rows.append({**base, **row})
                    print(f"   {cell} 완료")

    os.makedirs(out_dir, exist_ok=True)
    per_seed = os.path.join(out_dir, "plan_bench.csv")
    summary = os.path.join(out_dir, "plan_bench_summary.csv")
    artifacts = {per_seed: _write_csv(rows, per_seed)}
    table = summarize_plan_bench(pd.DataFrame(rows))
    table.to_csv(summary, index=False)
    artifacts[summary] = len(table)
    print(f"[OK] {os.path.basename(summary)} 저장 완료 ({len(table)}행)")
    return artifacts, status


def _bench_cell(world, builder, n, horizon, seed, schedule, config) -> Dict:
    cell_world = world.replace(n_particles=n, horizon=horizon, seed=seed)
    models = WorldModels.from_config(cell_world)
    start = np.asarray(cell_world.start, dtype=float)
    belief = ParticleBelief.from_gaussian(start, cell_world.sigma_0, n, make_stream(seed, "prior"))
    tree = build_tree(builder, belief, cell_world, models, seed, horizon, config.rollouts)

    try:
        exact = exact_plan_on_tree(tree, models.fork(), cell_world, schedule, config.time_budget)
    except PlanBudgetExceeded as e:
        logger.warning("정확 플래너 중단: %s", e)
        return {"n_nodes": tree.size, "exact_time": e.elapsed, "status": "budget_exceeded"}

    adaptive = plan_on_tree(tree, models.fork(), cell_world, schedule, config.lazy_rewards)
    e, a = exact.diagnostics, adaptive.diagnostics
    value = exact.bounds.lower
    return {
        "n_nodes": tree.size,
        "exact_time": e.wall_time,
        "adaptive_time": a.wall_time,
        "exact_transition_calls": e.transition_calls,
        "exact_observation_calls": e.observation_calls,
        "exact_density_calls": e.density_calls,
        "adaptive_transition_calls": a.transition_calls,
        "adaptive_observation_calls": a.observation_calls,
        "adaptive_density_calls": a.density_calls,
        "call_ratio": a.density_calls / max(e.density_calls, 1),
        "exact_action": exact.action,
        "adaptive_action": adaptive.action,
        "action_equal": exact.action == adaptive.action,
        "exact_value": value,
        "lower": adaptive.bounds.lower,
        "upper": adaptive.bounds.upper,
        "bracketed": adaptive.bounds.contains(value),
        "root_level": adaptive.bounds.level,
        "refinements": a.refinements,
        "cache_hits": a.cache_hits,
        "status": "ok",
    }


def summarize_plan_bench(frame: pd.DataFrame) -> pd.DataFrame:
    """셀별 평균 시간 / 밀도 평가, 행동 일치 여부"""
    keys = ["world", "builder", "n_particles", "horizon"]
    if frame.empty or "exact_time" not in frame:
        return pd.DataFrame(columns=keys)
    done = frame[frame["status"] == "ok"]
    if done.empty:
        return pd.DataFrame(columns=keys)
    return done.groupby(keys, as_index=False).agg(
        seeds=("seed", "count"),
        exact_time=("exact_time", "mean"),
        adaptive_time=("adaptive_time", "mean"),
        exact_density_calls=("exact_density_calls", "mean"),
        adaptive_density_calls=("adaptive_density_calls", "mean"),
        median_call_ratio=("call_ratio", "median"),
        action_equal=("action_equal", "all"),
        bracketed=("bracketed", "all"),
    )


# ========== receding-run ==========

def run_receding(config: RunConfig, out_dir: str, seed_offset: int = 0) -> Tuple[Artifacts, str]:
    """궤적 / 히스토그램 / belief 스냅샷 CSV"""
    _banner("한줌 - Receding horizon 실행")
    digest = config_hash(config)
    schedule = config.simplification
    steps, histogram, snapshots = [], [], []
    status = "ok"

    for world in config.worlds:
        for builder in config.builders:
            for seed in config.seeds_with_offset(seed_offset):
                base = {"config_hash": digest, "world": world.name, "builder": builder, "seed": seed}
                try:
                    result = receding_horizon_run(
                        world, builder, schedule, seed, config.verify_exact, config.rollouts,
                        config.lazy_rewards
                    )
                except Exception as e:
                    logger.exception("receding 실패: %s seed=%d", world.name, seed)
                    print(f"[ERROR] {world.name}/{builder} seed={seed}: {e}")
                    status = "partial"
                    continue

                steps.extend({**base, **row} for row in result.steps)
                histogram.extend({**base, **row} for row in result.histogram)
                snapshots.extend({**base, **row} for row in result.snapshots)
                mark = "목표 도달" if result.reached_goal else "미도달"
                print(f"   {world.name}/{builder} seed={seed}: {len(result.steps)} 스텝, {mark}")

    os.makedirs(out_dir, exist_ok=True)
    artifacts = {}
    for name, rows in (
        ("receding_trajectory.csv", steps),
        ("receding_histogram.csv", histogram),
        ("receding_snapshots.csv", snapshots),
    ):
        path = os.path.join(out_dir, name)
        artifacts[path] = _write_csv(rows, path)

    summary = summarize_histogram(pd.DataFrame(histogram))
    path = os.path.join(out_dir, "receding_histogram_summary.csv")
    summary.to_csv(path, index=False)
    artifacts[path] = len(summary)
    return artifacts, status


def summarize_histogram(frame: pd.DataFrame) -> pd.DataFrame:
    """world / 깊이별 레벨 분포 (깊이마다 합 1)"""
    keys = ["world", "depth", "level"]
    if frame.empty:
        return pd.DataFrame(columns=keys + ["count", "fraction"])
    counts = frame.groupby(keys, as_index=False)["count"].sum()
    totals = counts.groupby(["world", "depth"])["count"].transform("sum")
    counts["fraction"] = counts["count"] / totals
    return counts


# ========== CLI ==========

RUNNERS = {
    "entropy-study": run_entropy_study,
    "plan-bench": run_plan_bench,
    "receding-run": run_receding,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harness", description="한줌 실험 하네스")
    commands = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sub = commands.add_parser(name)
        sub.add_argument("--config", default=None,
                         help=f"실험 설정 JSON (기본: data/configs/{EXPERIMENT_FILES[name]})")
        sub.add_argument("--out", default=None, help="출력 디렉토리 (기본: 설정의 output_dir)")
        sub.add_argument("--seed-offset", type=int, default=0, help="모든 seed 에 더할 값")
        sub.add_argument("--no-ledger", action="store_true", help="실행 기록 DB 에 남기지 않음")
    return parser


def _emit_error(error: Exception):
    print(json.dumps({"error": str(error), "type": type(error).__name__}, ensure_ascii=False), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    """메인 실행 - 종료 코드 반환 (0 성공, 2 설정 오류, 1 기타)"""
    logging.basicConfig(
        level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    args = build_parser().parse_args(argv)
    path = args.config or config_path(EXPERIMENT_FILES[args.command])

    try:
        config = load_config(path)
        if config.experiment != args.command:
            raise ConfigError(f"설정의 experiment({config.experiment}) 가 명령({args.command}) 과 다릅니다")
        out_dir = args.out or config.output_dir

        started = time.perf_counter()
        artifacts, status = RUNNERS[args.command](config, out_dir, args.seed_offset)
        wall_time = time.perf_counter() - started

        meta = emit_metadata(config, out_dir, args.seed_offset, extra={
            "status": status,
            "wall_time": wall_time,
            "artifacts": {os.path.basename(p): rows for p, rows in artifacts.items()},
        })
        artifacts[meta] = None

        if not args.no_ledger:
            try:
                from database import record_run
                record_run(
                    args.command, config_hash(config), out_dir, artifacts, status,
                    args.seed_offset, wall_time, path
                )
            except Exception as e:
                print(f"[WARN] 실행 기록 저장 실패: {e}")

        _banner(f"{args.command} 완료 ({status}, {wall_time:.1f}s)")
        return 0
    except ConfigError as e:
        print(f"[ERROR] 설정 오류: {e}")
        _emit_error(e)
        return 2
    except Exception as e:
        logger.exception("실행 실패")
        _emit_error(e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
