import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import pandas as pd
from tqdm import tqdm

from genstrat.config import PipelineConfig, load_bindings, load_config
from genstrat.errors import ArtifactSchemaError, GenstratError, InsufficientDataError
from genstrat.logging_config import setup_logging
from genstrat.schemas.axes import AXIS_NAMES, MeasurementTier
from genstrat.schemas.game import AcceptanceReport, BuilderConfig, GameSpec
from genstrat.schemas.tournament import SlotRow
from genstrat.services import engine, solver
from genstrat.services.artifacts import Provenance, read_csv, read_jsonl, write_csv, write_jsonl, write_manifest
from genstrat.services.axes import measure_axes
from genstrat.services.builder import BUILDER_VERSION, build_game, generate_pool
from genstrat.services.catalog import fixture, fixture_by_seed, fixture_names
from genstrat.services.selection import farthest_point_sample, minmax_normalize
from genstrat.services.stats import ablation, alpha, diagnostics, jaggedness, profile, rating, robustness, stability
from genstrat.services.textio import render_rulebook
from genstrat.services.tournament import (
    choose_anchors,
    fallback_report,
    run_ablation,
    run_tournament,
    schedule,
    sibling_pairs,
    slot_frame,
)

logger = logging.getLogger("genstrat.cli")

POOL_FILE = "pool.jsonl"
AXES_FILE = "axes.csv"
SELECTION_FILE = "selection.csv"
BOUNDS_FILE = "bounds.csv"
SLOTS_FILE = "slots.jsonl"
ABLATION_FILE = "ablation_slots.jsonl"
REPORT_DIR = "report"
MATCH_DIR = "matches"


def _provenance(kind: str, upstream: Optional[Provenance] = None, **extra: Any) -> Provenance:
    """上流の由来情報を引き継ぎつつ、この段のシードを書き込む"""
    merged: Dict[str, Any] = dict(upstream.extra) if upstream else {}
    merged.update(extra)
    return Provenance(
        kind=kind,
        builder_version=(upstream.builder_version if upstream and upstream.builder_version else BUILDER_VERSION),
        measurement_seed=upstream.measurement_seed if upstream else None,
        schedule_seed=upstream.schedule_seed if upstream else None,
        bootstrap_seed=upstream.bootstrap_seed if upstream else None,
        extra=merged,
    )


def _builder_from(provenance: Provenance, config: PipelineConfig) -> BuilderConfig:
    """成果物に記録されたビルダー設定を復元する（バージョン違いは build_game が拒否する）"""
    recorded = provenance.extra.get("builder")
    data = dict(recorded) if recorded else config.builder.model_dump()
    data["builder_version"] = provenance.builder_version
    return BuilderConfig.model_validate(data)


def _resolve_spec(seed: int, builder: BuilderConfig) -> GameSpec:
    """負のシードはフィクスチャ、それ以外は生成器で作る"""
    if seed < 0:
        try:
            return fixture_by_seed(seed)
        except KeyError as exc:
            raise GenstratError(str(exc)) from exc
    return build_game(seed, builder)


def _score(args: Tuple[int, BuilderConfig, MeasurementTier, int]) -> Dict[str, Any]:
    seed, builder, tier, measurement_seed = args
    return measure_axes(_resolve_spec(seed, builder), tier, measurement_seed).model_dump()


def _read_slots(path: Path) -> Tuple[List[SlotRow], Provenance]:
    rows, provenance = read_jsonl(path, SlotRow)
    return rows, provenance


def cmd_gen_pool(args: argparse.Namespace, config: PipelineConfig) -> int:
    manifest = generate_pool(
        seed_start=config.seed_start,
        target_accepted=config.pool_target,
        config=config.builder,
        episodes=config.acceptance_episodes,
        max_candidates=args.max_candidates,
        workers=config.workers,
        progress=not args.quiet,
    )
    provenance = _provenance(
        "pool",
        builder=config.builder.model_dump(exclude={"builder_version"}),
        seed_start=manifest.seed_start,
        target_accepted=manifest.target_accepted,
        episodes=manifest.episodes,
        truncated=manifest.truncated,
    )
    path = write_jsonl(args.out / POOL_FILE, manifest.rows, provenance)
    write_manifest(args.out, {"pool": path.name})
    logger.info("pool: %d accepted of %d candidates", len(manifest.accepted_seeds), len(manifest.rows))
    return 0


def cmd_score_axes(args: argparse.Namespace, config: PipelineConfig) -> int:
    reports, pool = read_jsonl(args.out / POOL_FILE, AcceptanceReport)
    builder = _builder_from(pool, config)
    seeds = [r.seed for r in reports if r.accepted]
    seeds += [fixture(name).seed for name in args.fixture or []]
    if not seeds:
        raise InsufficientDataError("the pool has no accepted games")
    tier = config.measurement_tier
    jobs = [(seed, builder, tier, config.measurement_seed) for seed in seeds]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as executor:
            rows = list(tqdm(executor.map(_score, jobs), total=len(jobs), disable=args.quiet, desc="axes"))
    else:
        rows = [_score(job) for job in tqdm(jobs, disable=args.quiet, desc="axes")]
    provenance = _provenance("axes", pool, tier=tier.name)
    provenance.measurement_seed = config.measurement_seed
    path = write_csv(args.out / AXES_FILE, pd.DataFrame(rows), provenance)
    write_manifest(args.out, {"axes": path.name})
    logger.info("scored %d games at the %s tier", len(rows), tier.name)
    return 0


def cmd_select(args: argparse.Namespace, config: PipelineConfig) -> int:
    axis_table, axes_provenance = read_csv(args.out / AXES_FILE, required=["seed", *AXIS_NAMES])
    pool = minmax_normalize(axis_table)
    picks = farthest_point_sample(pool, min(config.k, len(pool.values)))
    if len(picks) < config.k:
        logger.warning("pool holds %d games; selected all of them instead of %d", len(picks), config.k)
    frame = pd.DataFrame(
        [
            {"rank": p.rank, "seed": p.seed, "min_distance": p.min_distance, **dict(zip(AXIS_NAMES, p.vector))}
            for p in picks
        ]
    )
    provenance = _provenance("selection", axes_provenance, k=config.k)
    selection = write_csv(args.out / SELECTION_FILE, frame, provenance)
    bounds = write_csv(
        args.out / BOUNDS_FILE, pool.bounds.rename_axis("axis").reset_index(), _provenance("bounds", axes_provenance)
    )
    write_manifest(args.out, {"selection": selection.name, "bounds": bounds.name})
    logger.info("selected seeds %s", [p.seed for p in picks])
    return 0


def _spec_from_args(args: argparse.Namespace, config: PipelineConfig) -> GameSpec:
    if args.fixture:
        return fixture(args.fixture)
    if args.seed is None:
        raise GenstratError("either --seed or --fixture is required")
    return _resolve_spec(args.seed, config.builder)


def cmd_render(args: argparse.Namespace, config: PipelineConfig) -> int:
    spec = _spec_from_args(args, config)
    text = render_rulebook(spec)
    if args.file is None:
        sys.stdout.write(text + "\n")
        return 0
    args.file.parent.mkdir(parents=True, exist_ok=True)
    args.file.write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_solve(args: argparse.Namespace, config: PipelineConfig) -> int:
    spec = _spec_from_args(args, config)
    game = solver.abstract_game(spec, args.level)
    result = solver.cfr_plus_solve(game, args.iterations, checkpoint_every=args.checkpoint_every)
    value = solver.expected_value(game, result.strategy)
    gap = solver.exploitability(game, result.strategy)
    provenance = _provenance(
        "solver",
        seed=spec.seed,
        level=args.level,
        iterations=result.iterations,
        value=value,
        exploitability=gap,
    )
    name = f"solver_{spec.seed}"
    strategy = write_jsonl(args.out / f"{name}.jsonl", solver.strategy_rows(game, result.strategy), provenance)
    checkpoints = write_csv(
        args.out / f"{name}_checkpoints.csv",
        pd.DataFrame(result.checkpoints, columns=["iteration", "exploitability"]),
        provenance,
    )
    write_manifest(args.out, {name: strategy.name, f"{name}_checkpoints": checkpoints.name})
    logger.info(
        "seed %d: %d infosets, value %.5f, exploitability %.5f", spec.seed, game.infoset_count, value, gap
    )
    return 0


def cmd_replay(args: argparse.Namespace, config: PipelineConfig) -> int:
    rows, slots_provenance = _read_slots(args.out / SLOTS_FILE)
    if not 0 <= args.slot < len(rows):
        raise GenstratError(f"slot index {args.slot} is out of range for {len(rows)} slot(s)")
    row = rows[args.slot]
    spec = _resolve_spec(row.game_seed, _builder_from(slots_provenance, config))
    state = engine.replay(spec, row.play_seed, row.action_log)
    if row.status == "ok" and (not state.terminal or engine.terminal_payoff(state)[0] != row.margin):
        raise GenstratError(f"slot {args.slot} does not replay to its recorded margin {row.margin}")
    name = f"match_{args.slot}"
    provenance = _provenance("match_log", slots_provenance, slot=args.slot, game_seed=row.game_seed)
    path = write_jsonl(args.out / MATCH_DIR / f"{name}.jsonl", state.match_log(), provenance)
    write_manifest(args.out, {name: f"{MATCH_DIR}/{path.name}"})
    logger.info("slot %d: %d event(s) written", args.slot, len(state.history))
    return 0


def _benchmark(args: argparse.Namespace, config: PipelineConfig) -> Tuple[Dict[int, GameSpec], Provenance]:
    selection, provenance = read_csv(args.out / SELECTION_FILE, required=["rank", "seed"])
    builder = _builder_from(provenance, config)
    seeds = [int(s) for s in selection.sort_values("rank")["seed"]]
    return {seed: _resolve_spec(seed, builder) for seed in seeds}, provenance


def _bindings(config: PipelineConfig):
    if config.agents_file is None:
        raise GenstratError("an agents file is required (agents_file in the config or --agents)")
    return {b.model_id: b for b in load_bindings(config.agents_file)}


def cmd_tournament(args: argparse.Namespace, config: PipelineConfig) -> int:
    specs, selection = _benchmark(args, config)
    bindings = _bindings(config)
    models = sorted(args.models or bindings)
    slots = schedule(
        models,
        list(specs),
        matches_per_matchup=config.matches_per_matchup,
        rule=config.coverage_rule,
        min_opponents=config.min_opponents,
        seed=config.schedule_seed,
    )
    rows = run_tournament(specs, bindings, slots, workers=config.workers, progress=not args.quiet)
    provenance = _provenance("slots", selection, coverage_rule=config.coverage_rule)
    provenance.schedule_seed = config.schedule_seed
    path = write_jsonl(args.out / SLOTS_FILE, rows, provenance)
    rates = pd.DataFrame([r.model_dump() for r in fallback_report(rows)])
    fallback = write_csv(args.out / "fallback.csv", rates, provenance)
    write_manifest(args.out, {"slots": path.name, "fallback": fallback.name})
    return 0


def cmd_ablation(args: argparse.Namespace, config: PipelineConfig) -> int:
    specs, selection = _benchmark(args, config)
    bindings = _bindings(config)
    for model_id in (args.low, args.high, *(args.anchors or [])):
        if model_id not in bindings:
            raise GenstratError(f"no agent binding for {model_id}")
    anchors = args.anchors
    if not anchors:
        rows, _ = _read_slots(args.out / SLOTS_FILE)
        fit = alpha.fit_alpha(slot_frame(rows))
        anchors = list(choose_anchors(fit.alpha, exclude=[args.low, args.high]))
    logger.info("ablation %s anchored on %s", args.family, anchors)
    ablation_rows = run_ablation(
        args.family,
        bindings[args.low],
        bindings[args.high],
        [bindings[a] for a in anchors],
        specs,
        runs=config.matches_per_matchup // 2,
        progress=not args.quiet,
    )
    path = args.out / ABLATION_FILE
    existing: List[SlotRow] = []
    if path.exists():
        existing, _ = _read_slots(path)
        existing = [r for r in existing if r.family != args.family]
    provenance = _provenance("ablation", selection)
    write_jsonl(path, existing + ablation_rows, provenance)
    write_manifest(args.out, {"ablation_slots": path.name})
    return 0


def cmd_fit(args: argparse.Namespace, config: PipelineConfig) -> int:
    rows, slots_provenance = _read_slots(args.out / SLOTS_FILE)
    if not rows:
        raise InsufficientDataError("the slot table is empty; nothing to fit")
    frame = slot_frame(rows)
    fit = alpha.fit_alpha(frame, B=config.bootstrap_alpha, seed=config.bootstrap_seed, progress=not args.quiet)
    provenance = _provenance("leaderboard", slots_provenance)
    provenance.bootstrap_seed = config.bootstrap_seed
    path = write_csv(args.out / "leaderboard.csv", fit.leaderboard(), provenance)
    write_manifest(args.out, {"leaderboard": path.name})
    for _, row in fit.leaderboard().iterrows():
        logger.info("%2d %-24s %+.3f", row["rank"], row["model"], row["alpha"])
    return 0


class ReportWriter:
    """レポート表を1つずつ書き、失敗した表は警告して飛ばす"""

    def __init__(self, directory: Path, provenance: Provenance) -> None:
        self.directory = directory
        self.provenance = provenance
        self.written: Dict[str, str] = {}
        self.skipped: List[str] = []

    def table(self, name: str, build: Callable[[], Optional[pd.DataFrame]]) -> Optional[pd.DataFrame]:
        try:
            frame = build()
        except GenstratError as exc:
            logger.warning("table %s skipped: %s", name, exc)
            self.skipped.append(name)
            return None
        if frame is None:
            return None
        path = write_csv(self.directory / f"{name}.csv", frame, self.provenance)
        self.written[name] = f"{REPORT_DIR}/{path.name}"
        return frame


def _square(frame: pd.DataFrame) -> pd.DataFrame:
    return frame.rename_axis("model").reset_index()


def cmd_report(args: argparse.Namespace, config: PipelineConfig) -> int:
    rows, slots_provenance = _read_slots(args.out / SLOTS_FILE)
    if not rows:
        raise InsufficientDataError("the slot table is empty; nothing to report")
    slots = slot_frame(rows)
    games = sorted(int(g) for g in slots["game_seed"].unique())
    axis_table, _ = read_csv(args.out / AXES_FILE, required=["seed", *AXIS_NAMES])
    axis_table = axis_table[axis_table["seed"].isin(games)].sort_values("seed").reset_index(drop=True)
    B, seed, progress = config.bootstrap_alpha, config.bootstrap_seed, not args.quiet

    provenance = _provenance("report", slots_provenance)
    provenance.bootstrap_seed = seed
    writer = ReportWriter(args.out / REPORT_DIR, provenance)

    fit = alpha.fit_alpha(slots, B=B, seed=seed, progress=progress)
    writer.table("leaderboard", fit.leaderboard)

    def bt_table() -> pd.DataFrame:
        bt = rating.bradley_terry(slots)
        table = bt.scores.rename("bt").rename_axis("model").reset_index()
        table["ties"] = bt.ties
        table["separated"] = bt.separated
        return table

    writer.table("bradley_terry", bt_table)
    writer.table("fallback", lambda: pd.DataFrame([r.model_dump() for r in fallback_report(rows)]))
    writer.table("coverage", lambda: diagnostics.coverage_table(slots))

    per_game = alpha.fit_alpha_per_game(slots, models=fit.models, B=B, seed=seed, progress=progress)
    writer.table("per_game_alpha", lambda: _square(per_game.alpha))
    writer.table(
        "variance_decomposition",
        lambda: alpha.variance_decomposition(per_game, slots, B=B, seed=seed, progress=progress).to_frame(),
    )

    matrix, significant = diagnostics.head_to_head_matrix(
        slots, B=config.bootstrap_profile, seed=seed, progress=progress
    )
    writer.table("head_to_head", lambda: _square(matrix))
    writer.table("head_to_head_significant", lambda: _square(significant))

    def correlation_table() -> pd.DataFrame:
        correlation, _ = diagnostics.axis_diagnostics(axis_table)
        return correlation.rename_axis("axis").reset_index()

    writer.table("axis_correlation", correlation_table)
    writer.table(
        "vif",
        lambda: diagnostics.axis_diagnostics(axis_table)[1].rename("vif").rename_axis("axis").reset_index(),
    )

    lengths = None
    if args.length_control:
        builder = _builder_from(slots_provenance, config)
        lengths = pd.Series({g: float(len(render_rulebook(_resolve_spec(g, builder)))) for g in games})

    fitted: Dict[str, Any] = {}

    def profile_table() -> pd.DataFrame:
        fitted["profile"] = profile.capability_profile(
            per_game,
            axis_table,
            slots,
            B=config.bootstrap_profile,
            seed=seed,
            rulebook_lengths=lengths,
            progress=progress,
        )
        return fitted["profile"].to_long()

    writer.table("profile", profile_table)
    composite = None
    if "profile" in fitted:
        writer.table("profile_extremes", lambda: profile.predicted_alpha_at_extremes(fitted["profile"], axis_table))
        composite = profile.composite_complexity(fitted["profile"])
        writer.table(
            "composite",
            lambda: pd.DataFrame({"score": composite.scores, "tertile": composite.tertile})
            .rename_axis("seed")
            .reset_index(),
        )
        writer.table("composite_weights", lambda: composite.weights.rename_axis("axis").reset_index())
        writer.table("tertile_leaderboards", lambda: robustness.tertile_leaderboards(slots, composite.tertile))

    sigma = jaggedness.stakes_scale(slots)
    writer.table(
        "per_game",
        lambda: diagnostics.per_game_table(
            axis_table, sigma, per_game.alpha, composite.scores if composite is not None else None
        ),
    )
    writer.table(
        "jaggedness",
        lambda: jaggedness.jaggedness(
            per_game.alpha, fit.alpha, slots, axis_table, K=config.jaggedness_k,
            B=config.bootstrap_profile, seed=seed, progress=progress,
        ).to_frame(),
    )
    writer.table(
        "jaggedness_k_sweep",
        lambda: _square(
            jaggedness.k_sweep(per_game.alpha, fit.alpha, slots, axis_table, reference_k=config.jaggedness_k)
        ),
    )
    writer.table(
        "jaggedness_subsets",
        lambda: jaggedness.subset_robustness(per_game.alpha, fit.alpha, slots, axis_table, K=config.jaggedness_k),
    )

    report = stability.rank_stability(per_game, fit.alpha)
    writer.table("rank_stability", lambda: report.games)
    writer.table("rank_stability_cells", lambda: report.candidates)

    writer.table("leave_one_game_out", lambda: robustness.leave_one_game_out(slots, fit))
    writer.table(
        "axis_clusters",
        lambda: robustness.cluster_refits(slots, fit, robustness.axis_clusters(axis_table)),
    )
    if args.exclude:
        writer.table("model_exclusion", lambda: robustness.model_exclusion(slots, fit, args.exclude))
    if args.solver_model:
        writer.table("solver_baseline", lambda: diagnostics.solver_baseline(slots, args.solver_model))

    ablation_path = args.out / ABLATION_FILE
    if ablation_path.exists():
        ablation_rows, _ = _read_slots(ablation_path)
        writer.table("ablation", lambda: ablation.ablation_delta(sibling_pairs(ablation_rows), B=B, seed=seed))

    write_manifest(args.out, writer.written)
    logger.info("report: %d tables written, %d skipped", len(writer.written), len(writer.skipped))
    return 0


def cmd_serve(args: argparse.Namespace, config: PipelineConfig) -> int:
    import uvicorn

    uvicorn.run("genstrat.main:app", host=args.host, port=args.port)
    return 0


HANDLERS: Dict[str, Callable[[argparse.Namespace, PipelineConfig], int]] = {
    "gen-pool": cmd_gen_pool,
    "score-axes": cmd_score_axes,
    "select": cmd_select,
    "render": cmd_render,
    "solve": cmd_solve,
    "replay": cmd_replay,
    "tournament": cmd_tournament,
    "ablation": cmd_ablation,
    "fit": cmd_fit,
    "report": cmd_report,
    "serve": cmd_serve,
}


def build_arg_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="YAML pipeline config")
    common.add_argument("--out", type=Path, default=Path("run"), help="run directory")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--quiet", action="store_true", help="disable progress bars")
    common.add_argument("--workers", type=int, default=None)
    common.add_argument("--agents", type=Path, default=None, help="agent bindings YAML")

    parser = argparse.ArgumentParser(prog="genstrat", description="Generated strategy-game benchmark pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-pool", parents=[common], help="generate and gate a candidate pool")
    p.add_argument("--seed-start", type=int, default=None)
    p.add_argument("--target", type=int, default=None, help="accepted games to collect")
    p.add_argument("--dial", type=float, default=None)
    p.add_argument("--episodes", type=int, default=None, help="acceptance episodes per candidate")
    p.add_argument("--max-candidates", type=int, default=None)

    p = sub.add_parser("score-axes", parents=[common], help="measure the six axes for accepted games")
    p.add_argument("--tier", choices=["fast", "precise"], default=None)
    p.add_argument("--measurement-seed", type=int, default=None)
    p.add_argument("--fixture", action="append", choices=fixture_names(), help="also score a fixture game")

    p = sub.add_parser("select", parents=[common], help="farthest-point selection of the benchmark")
    p.add_argument("--k", type=int, default=None)

    for name, text in (("render", "print a rulebook"), ("solve", "run CFR+ on one game")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--fixture", choices=fixture_names(), default=None)
        if name == "render":
            p.add_argument("--file", type=Path, default=None)
        else:
            p.add_argument("--iterations", type=int, default=1000)
            p.add_argument("--checkpoint-every", type=int, default=100)
            p.add_argument("--level", choices=["default", "fine"], default="default")

    p = sub.add_parser("replay", parents=[common], help="replay one slot and export its event log")
    p.add_argument("--slot", type=int, required=True, help="row index in the slot table")

    p = sub.add_parser("tournament", parents=[common], help="schedule and play paired-seat slots")
    p.add_argument("--schedule-seed", type=int, default=None)
    p.add_argument("--matches", type=int, default=None, help="slots per matchup (even)")
    p.add_argument("--coverage-rule", choices=["rotation", "optimization", "round_robin"], default=None)
    p.add_argument("--models", nargs="+", default=None, help="subset of binding model ids")

    p = sub.add_parser("ablation", parents=[common], help="play low/high sibling slots against anchors")
    p.add_argument("--family", required=True)
    p.add_argument("--low", required=True, help="model id of the low setting")
    p.add_argument("--high", required=True, help="model id of the high setting")
    p.add_argument("--anchors", nargs="+", default=None)
    p.add_argument("--matches", type=int, default=None)

    p = sub.add_parser("fit", parents=[common], help="fit the sum-to-zero leaderboard")
    p.add_argument("--bootstrap", type=int, default=None)
    p.add_argument("--bootstrap-seed", type=int, default=None)

    p = sub.add_parser("report", parents=[common], help="regenerate every statistics table")
    p.add_argument("--bootstrap", type=int, default=None)
    p.add_argument("--bootstrap-profile", type=int, default=None)
    p.add_argument("--bootstrap-seed", type=int, default=None)
    p.add_argument("--jaggedness-k", type=int, default=None)
    p.add_argument("--solver-model", default=None)
    p.add_argument("--exclude", nargs="+", default=None, help="models dropped in the exclusion refit")
    p.add_argument("--length-control", action="store_true", help="add rulebook length to the profile design")

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """コマンドラインの値を PipelineConfig のキーに写す"""
    pick = {
        "seed_start": "seed_start",
        "target": "pool_target",
        "episodes": "acceptance_episodes",
        "tier": "tier",
        "measurement_seed": "measurement_seed",
        "k": "k",
        "schedule_seed": "schedule_seed",
        "matches": "matches_per_matchup",
        "coverage_rule": "coverage_rule",
        "bootstrap": "bootstrap_alpha",
        "bootstrap_profile": "bootstrap_profile",
        "bootstrap_seed": "bootstrap_seed",
        "jaggedness_k": "jaggedness_k",
        "workers": "workers",
        "agents": "agents_file",
    }
    overrides = {key: getattr(args, flag) for flag, key in pick.items() if hasattr(args, flag)}
    return overrides


def _config(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(args.config, _overrides(args))
    dial = getattr(args, "dial", None)
    if dial is not None:
        builder = BuilderConfig.model_validate({**config.builder.model_dump(), "dial": dial})
        config = config.model_copy(update={"builder": builder})
    return config


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        config = _config(args)
    except ValueError as exc:
        sys.stderr.write(f"genstrat: invalid configuration: {exc}\n")
        return 2
    try:
        return HANDLERS[args.command](args, config)
    except ArtifactSchemaError as exc:
        sys.stderr.write(f"genstrat: {exc}\n")
        for line in exc.diagnostics:
            sys.stderr.write(f"  {line}\n")
        return 1
    except GenstratError as exc:
        sys.stderr.write(f"genstrat: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
