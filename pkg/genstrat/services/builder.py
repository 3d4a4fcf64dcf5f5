import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, Field
from tqdm import tqdm

from genstrat.errors import ReconstructionError
from genstrat.schemas.game import (
    PLAYERS,
    SHOWDOWN,
    AcceptanceReport,
    BuilderConfig,
    Condition,
    DeckConfig,
    GameSpec,
    Phase,
    Transition,
)
from genstrat.services import engine
from genstrat.services.catalog import assemble_spec
from genstrat.services.hashing import fnv1a_64

logger = logging.getLogger(__name__)

# 生成分布のテーブル。内容を変えると BUILDER_VERSION が変わる
TEMPLATE_WEIGHTS: Dict[str, Tuple[float, float]] = {
    # (c=0 での重み, c に比例する重み)
    "action": (1.0, 0.0),
    "observation": (0.0, 0.8),
    "simultaneous": (0.0, 0.4),
    "position": (0.0, 0.4),
}
PHASE_STOP_FLOOR: float = 0.15
BRANCH_RATE: float = 0.7
MANEUVER_RATE: float = 0.3
MANEUVERS: Tuple[str, ...] = ("pass", "steal", "swap", "discard_draw")
OBSERVATIONS: Tuple[str, ...] = ("deal_public", "deal_private", "peek", "reveal", "compare")
POSITIONS: Tuple[str, ...] = ("high_card", "chip_lead", "alternate", "low_card")
METRICS: Tuple[str, ...] = ("high_card", "sum", "pairs", "suit_count", "low_card")
CONDITION_FAMILIES: Tuple[str, ...] = ("chips", "cards", "rounds")
BID_LEVELS: Tuple[int, ...] = (0, 1, 2)
PHASE_VISIT_CAP: int = 2

# 受理ゲート
MAX_AVG_MOVES: float = 10.0
MIN_FIRE_FRACTION: float = 0.05
MAX_RARE_PHASE_SHARE: float = 0.30
MAX_DEAD_BRANCH_SHARE: float = 0.34
DEFAULT_EPISODES: int = 2000


def _builder_tables() -> Dict[str, object]:
    return {
        "templates": TEMPLATE_WEIGHTS,
        "stop_floor": PHASE_STOP_FLOOR,
        "branch_rate": BRANCH_RATE,
        "maneuver_rate": MANEUVER_RATE,
        "maneuvers": MANEUVERS,
        "observations": OBSERVATIONS,
        "positions": POSITIONS,
        "metrics": METRICS,
        "families": CONDITION_FAMILIES,
        "bids": BID_LEVELS,
        "visit_cap": PHASE_VISIT_CAP,
        "revision": 1,
    }


BUILDER_VERSION: str = hashlib.sha256(
    json.dumps(_builder_tables(), sort_keys=True).encode("utf-8")
).hexdigest()[:12]


def canonical_json(spec: GameSpec) -> str:
    """ハッシュとゴールデンテスト用の正規シリアライズ"""
    return json.dumps(spec.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def spec_digest(spec: GameSpec) -> str:
    return hashlib.sha256(canonical_json(spec).encode("utf-8")).hexdigest()


class GameBuilder:
    """シードと複雑度ダイヤルからゲームを生成する

    Args:
        seed (int): 候補シード
        config (BuilderConfig): ダイヤルと構造上限

    Attributes:
        rng (np.random.Generator): シードから導出した生成用乱数
        c (float): 複雑度ダイヤル
    """

    def __init__(self, seed: int, config: BuilderConfig) -> None:
        version = config.builder_version or BUILDER_VERSION
        if version != BUILDER_VERSION:
            raise ReconstructionError(
                f"builder version {version} does not match the running builder {BUILDER_VERSION}"
            )
        self.seed: int = seed
        self.config: BuilderConfig = config
        self.c: float = config.dial
        entropy = [seed & ((1 << 64) - 1), fnv1a_64("builder"), int(round(config.dial * 1_000_000))]
        self.rng: np.random.Generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    def _phase_count(self) -> int:
        # 成功確率 q の切断幾何分布。c=0 なら必ず1フェーズ
        q = 1.0 - (1.0 - PHASE_STOP_FLOOR) * self.c
        extra = 0 if q >= 1.0 else int(self.rng.geometric(q)) - 1
        return max(1, min(1 + extra, self.config.max_phases))

    def _templates(self, n: int) -> List[str]:
        names = list(TEMPLATE_WEIGHTS)
        weights = np.array([base + slope * self.c for base, slope in TEMPLATE_WEIGHTS.values()])
        drawn = [names[i] for i in self.rng.choice(len(names), size=n, p=weights / weights.sum())]
        if "action" not in drawn:
            drawn[-1] = "action"
        return drawn

    def _deck(self) -> Tuple[DeckConfig, int]:
        ranks = 3 + int(self.rng.binomial(10, self.c))
        suits = 1 + int(self.rng.binomial(3, self.c))
        while ranks * suits > self.config.max_deck:
            if ranks > 3:
                ranks -= 1
            elif suits > 1:
                suits -= 1
            else:
                break
        hand = 1 + int(self.rng.binomial(max(self.config.max_hand - 1, 0), 0.5 * self.c))
        while hand > 1 and ranks * suits < 2 * hand + 2:
            hand -= 1
        return DeckConfig(ranks=ranks, suits=suits), hand

    def _betting(self, pid: str) -> Phase:
        sizes = [1]
        if self.rng.random() < self.c:
            sizes.append(2)
        if self.rng.random() < 0.5 * self.c:
            sizes.append(3)
        return Phase(
            id=pid,
            kind="action",
            style="betting",
            bet_sizes=tuple(sizes),
            max_raises=int(self.rng.binomial(2, self.c)),
        )

    def _phase(self, pid: str, template: str, has_betting: bool) -> Phase:
        rng = self.rng
        if template == "action":
            if has_betting and rng.random() < MANEUVER_RATE:
                return Phase(id=pid, kind="action", style="maneuver", maneuver=MANEUVERS[int(rng.integers(len(MANEUVERS)))])
            return self._betting(pid)
        if template == "observation":
            kind = OBSERVATIONS[int(rng.integers(len(OBSERVATIONS)))]
            interactive = kind in ("peek", "compare") and rng.random() < 0.6 * self.c
            return Phase(
                id=pid,
                kind="observation",
                observation=kind,
                count=1 + int(rng.binomial(1, 0.5 * self.c)),
                interactive=interactive,
                fee=1 if interactive else 0,
            )
        if template == "simultaneous":
            kind = "side_bet" if rng.random() < 0.5 else "auction"
            return Phase(
                id=pid,
                kind="simultaneous",
                simultaneous=kind,
                stake=1 + int(rng.binomial(1, self.c)),
                bid_levels=BID_LEVELS if kind == "auction" else (),
            )
        return Phase(
            id=pid,
            kind="position",
            position=POSITIONS[int(rng.integers(len(POSITIONS)))],
            defer=bool(rng.random() < 0.5 * self.c),
        )

    def _branch(self, index: int, ids: List[str], deck: DeckConfig, ante: int, stack: int) -> Optional[Transition]:
        rng = self.rng
        family = CONDITION_FAMILIES[int(rng.integers(len(CONDITION_FAMILIES)))]
        forward = ids[index + 2 :] + [SHOWDOWN] if index + 1 < len(ids) else []
        if family == "rounds":
            target = ids[int(rng.integers(index + 1))]
            cond = Condition(family="rounds", ref=f"rounds:{target}", op="<", value=PHASE_VISIT_CAP)
            return Transition(target=target, condition=cond)
        if not forward:
            return None
        target = forward[int(rng.integers(len(forward)))]
        if family == "chips":
            ref = ["pot", f"stack:{PLAYERS[0]}", f"stack:{PLAYERS[1]}"][int(rng.integers(3))]
            if ref == "pot":
                cond = Condition(family="chips", ref=ref, op=">=", value=2 * ante + int(rng.integers(1, 5)))
            else:
                cond = Condition(family="chips", ref=ref, op="<", value=stack - int(rng.integers(0, 4)))
        else:
            ref = ["board", f"hand:{PLAYERS[0]}", f"hand:{PLAYERS[1]}"][int(rng.integers(3))]
            if ref == "board" and rng.random() < 0.5:
                cond = Condition(family="cards", ref=ref, measure="count", op=">=", value=1 + int(rng.integers(2)))
            else:
                low = deck.ranks // 2
                cond = Condition(
                    family="cards", ref=ref, measure="max_rank", op=">=", value=int(rng.integers(low, deck.ranks))
                )
        return Transition(target=target, condition=cond)

    def build(self) -> GameSpec:
        """ゲーム仕様を生成する

        Returns:
            GameSpec: 条件構造を解決して構造検証を通った仕様
        """
        n = self._phase_count()
        templates = self._templates(n)
        deck, hand = self._deck()
        ante = 1
        stack = 10 + 5 * int(self.rng.binomial(2, self.c))
        metric = "high_card" if self.c == 0 else METRICS[int(self.rng.integers(len(METRICS)))]
        ids = [f"p{i}" for i in range(n)]

        bodies: List[Phase] = []
        has_betting = False
        for pid, template in zip(ids, templates):
            phase = self._phase(pid, template, has_betting)
            has_betting = has_betting or phase.style == "betting"
            bodies.append(phase)
        if not has_betting:
            last_action = max(i for i, t in enumerate(templates) if t == "action")
            bodies[last_action] = self._betting(ids[last_action])

        phases: List[Phase] = []
        for i, phase in enumerate(bodies):
            default = Transition(target=ids[i + 1] if i + 1 < n else SHOWDOWN)
            transitions: List[Transition] = []
            if self.rng.random() < BRANCH_RATE * self.c:
                branch = self._branch(i, ids, deck, ante, stack)
                if branch is not None:
                    transitions.append(branch)
            transitions.append(default)
            phases.append(phase.model_copy(update={"transitions": tuple(transitions)}))

        spec = assemble_spec(
            seed=self.seed,
            phases=phases,
            deck=deck,
            name=f"gbg-{self.seed}",
            hand_size=hand,
            ante=ante,
            initial_stack=stack,
            showdown_metric=metric,
            dial=self.c,
            builder_version=BUILDER_VERSION,
            phase_visit_cap=PHASE_VISIT_CAP,
        )
        spec = resolve_conditions(spec)
        engine.validate_spec(spec)
        return spec


def build_game(seed: int, config: BuilderConfig) -> GameSpec:
    """(seed, config) から決定的にゲームを生成する"""
    return GameBuilder(seed, config).build()


# ---------------------------------------------------------------------------
# 条件構造の解決
# ---------------------------------------------------------------------------


def _condition_range(spec: GameSpec, phase_id: str, cond: Condition) -> Tuple[int, int]:
    """フェーズ終了時点で条件の左辺が取りうる範囲"""
    cap = spec.phase_visit_cap
    top_rank = spec.deck.ranks - 1
    board_max = min(
        spec.deck.size,
        sum(p.count * cap for p in spec.phases if p.observation == "deal_public"),
    )
    if cond.family == "chips":
        if cond.ref == "pot":
            return 2 * min(spec.ante, spec.initial_stack), 2 * spec.initial_stack
        return 0, 2 * spec.initial_stack
    if cond.family == "cards":
        if cond.ref == "board":
            if cond.measure == "count":
                return 0, board_max
            return -1, top_rank if board_max > 0 else -1
        if cond.measure == "count":
            return spec.hand_size, spec.deck.size
        return (0 if spec.hand_size > 0 else -1), top_rank
    counter = cond.ref.split(":", 1)[1]
    return (1 if counter == phase_id else 0), cap


def _static_truth(spec: GameSpec, phase_id: str, cond: Condition) -> Optional[bool]:
    lo, hi = _condition_range(spec, phase_id, cond)
    if cond.op == ">=":
        if lo >= cond.value:
            return True
        if hi < cond.value:
            return False
    else:
        if hi < cond.value:
            return True
        if lo >= cond.value:
            return False
    return None


def resolve_conditions(spec: GameSpec) -> GameSpec:
    """静的に真偽が決まる分岐を書き換え、到達不能なフェーズを除く

    常に偽の分岐は削除し、常に真の前向き分岐は無条件遷移にする。
    常に真の後ろ向き分岐は訪問上限のラウンドカウンタで守る。
    """
    ids = [p.id for p in spec.phases]
    rewritten: List[Phase] = []
    for index, phase in enumerate(spec.phases):
        transitions: List[Transition] = []
        for tr in phase.transitions:
            if tr.condition is None:
                transitions.append(tr)
                break
            truth = _static_truth(spec, phase.id, tr.condition)
            backward = tr.target != SHOWDOWN and ids.index(tr.target) <= index
            if truth is False:
                continue
            if truth is True and backward:
                guard = Condition(family="rounds", ref=f"rounds:{tr.target}", op="<", value=spec.phase_visit_cap)
                if _static_truth(spec, phase.id, guard) is False:
                    continue
                transitions.append(Transition(target=tr.target, condition=guard))
            elif truth is True:
                transitions.append(Transition(target=tr.target))
                break
            else:
                transitions.append(tr)
        if not transitions or transitions[-1].condition is not None:
            transitions.append(Transition(target=ids[index + 1] if index + 1 < len(ids) else SHOWDOWN))
        rewritten.append(phase.model_copy(update={"transitions": tuple(transitions)}))

    by_id = {p.id: p for p in rewritten}
    reachable: Set[str] = set()
    frontier = [spec.start]
    while frontier:
        pid = frontier.pop()
        if pid in reachable or pid == SHOWDOWN:
            continue
        reachable.add(pid)
        frontier.extend(tr.target for tr in by_id[pid].transitions)
    kept = [p for p in rewritten if p.id in reachable]
    if len(kept) == len(rewritten):
        return spec.model_copy(update={"phases": tuple(kept)})
    kept_ids = [p.id for p in kept]
    return assemble_spec(
        seed=spec.seed,
        phases=kept,
        deck=spec.deck,
        name=spec.name,
        hand_size=spec.hand_size,
        ante=spec.ante,
        initial_stack=spec.initial_stack,
        showdown_metric=spec.showdown_metric,
        dial=spec.dial,
        builder_version=spec.builder_version,
        phase_visit_cap=spec.phase_visit_cap,
        start=kept_ids[0] if spec.start not in kept_ids else spec.start,
    )


# ---------------------------------------------------------------------------
# 受理判定
# ---------------------------------------------------------------------------


def conditional_branches(spec: GameSpec) -> List[Tuple[str, int]]:
    return [
        (phase.id, index)
        for phase in spec.phases
        for index, tr in enumerate(phase.transitions)
        if tr.condition is not None
    ]


def acceptance_check(spec: GameSpec, episodes: int = DEFAULT_EPISODES) -> AcceptanceReport:
    """ランダムプレイのモンテカルロで3つの受理条件を判定する

    Args:
        spec (GameSpec): 判定対象
        episodes (int): エピソード数

    Returns:
        AcceptanceReport: 判定結果と不合格理由
    """
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    seq = np.random.SeedSequence([spec.seed & ((1 << 64) - 1), fnv1a_64("acceptance")])
    rng = np.random.Generator(np.random.Philox(seq))

    def chooser(state, seat, menu) -> int:
        return int(rng.integers(len(menu)))

    fired_phases: Dict[str, int] = {p.id: 0 for p in spec.phases}
    branches = conditional_branches(spec)
    fired_branches: Set[Tuple[str, int]] = set()
    total_moves = 0
    for _ in range(episodes):
        state = engine.play(spec, int(rng.integers(2**63)), chooser)
        total_moves += sum(state.moves.values())
        entered: Set[str] = set()
        for ev in state.history:
            if ev.kind == "PhaseEnter":
                entered.add(ev.payload["phase"])
            elif ev.kind == "Transition" and ev.payload["conditional"]:
                fired_branches.add((ev.payload["phase"], ev.payload["index"]))
        for pid in entered:
            fired_phases[pid] += 1

    avg_moves = total_moves / (len(PLAYERS) * episodes)
    fractions = {pid: count / episodes for pid, count in fired_phases.items()}
    rare_share = sum(1 for f in fractions.values() if f < MIN_FIRE_FRACTION) / len(fractions)
    dead: Optional[float] = None
    if branches:
        dead = sum(1 for b in branches if b not in fired_branches) / len(branches)

    reasons: List[str] = []
    if avg_moves > MAX_AVG_MOVES:
        reasons.append(f"avg_moves {avg_moves:.2f} > {MAX_AVG_MOVES}")
    if rare_share > MAX_RARE_PHASE_SHARE:
        reasons.append(f"phase_firing {rare_share:.2f} of phases fire in < {MIN_FIRE_FRACTION:.0%} of episodes")
    if dead is not None and dead > MAX_DEAD_BRANCH_SHARE:
        reasons.append(f"dead_branches {dead:.2f} > {MAX_DEAD_BRANCH_SHARE}")
    return AcceptanceReport(
        seed=spec.seed,
        episodes=episodes,
        avg_moves=avg_moves,
        phase_fire_fractions=fractions,
        dead_branch_fraction=dead,
        accepted=not reasons,
        reasons=reasons,
    )


class PoolManifest(BaseModel):
    builder_version: str
    dial: float
    seed_start: int
    target_accepted: int
    episodes: int
    truncated: bool = False
    rows: List[AcceptanceReport] = Field(default_factory=list)

    @property
    def accepted_seeds(self) -> List[int]:
        return [row.seed for row in self.rows if row.accepted]


def _evaluate_seed(args: Tuple[int, BuilderConfig, int]) -> AcceptanceReport:
    seed, config, episodes = args
    return acceptance_check(build_game(seed, config), episodes)


def generate_pool(
    seed_start: int,
    target_accepted: int,
    config: BuilderConfig,
    episodes: int = DEFAULT_EPISODES,
    max_candidates: Optional[int] = None,
    workers: int = 1,
    progress: bool = False,
) -> PoolManifest:
    """シード順に候補を判定し、目標数の受理ゲームが集まるまで続ける

    並列実行でも結果はシード順に組み立てるため、直列実行と同じ manifest になる。

    Args:
        seed_start (int): 最初の候補シード
        target_accepted (int): 受理数の目標
        config (BuilderConfig): ビルダー設定
        episodes (int): 受理判定のエピソード数
        max_candidates (Optional[int]): 候補シード数の上限（既定は目標の50倍）
        workers (int): プロセス数
        progress (bool): 進捗バーを表示するか

    Returns:
        PoolManifest: 全候補の判定結果
    """
    if target_accepted < 1:
        raise ValueError("target_accepted must be at least 1")
    cap = max_candidates if max_candidates is not None else 50 * target_accepted
    manifest = PoolManifest(
        builder_version=config.builder_version or BUILDER_VERSION,
        dial=config.dial,
        seed_start=seed_start,
        target_accepted=target_accepted,
        episodes=episodes,
    )
    accepted = 0
    batch = max(1, workers * 4)
    bar = tqdm(total=target_accepted, disable=not progress, desc="pool")
    executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        seed = seed_start
        while accepted < target_accepted and seed < seed_start + cap:
            seeds: Sequence[int] = range(seed, min(seed + batch, seed_start + cap))
            args = [(s, config, episodes) for s in seeds]
            reports = list(executor.map(_evaluate_seed, args)) if executor else [_evaluate_seed(a) for a in args]
            for report in reports:
                manifest.rows.append(report)
                logger.debug("seed %d accepted=%s reasons=%s", report.seed, report.accepted, report.reasons)
                if report.accepted:
                    accepted += 1
                    bar.update(1)
                    if accepted >= target_accepted:
                        break
            seed += len(seeds)
    finally:
        bar.close()
        if executor is not None:
            executor.shutdown()
    if accepted < target_accepted:
        manifest.truncated = True
        logger.warning(
            "candidate cap %d reached with %d/%d accepted games", cap, accepted, target_accepted
        )
    logger.info("pool: %d candidates, %d accepted", len(manifest.rows), accepted)
    return manifest
