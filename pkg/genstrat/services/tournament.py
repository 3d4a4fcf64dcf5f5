import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import pandas as pd
from tqdm import tqdm

from genstrat.errors import AgentTimeoutError, GenstratError, ScheduleError
from genstrat.schemas.game import PLAYERS, GameSpec
from genstrat.schemas.tournament import AgentBinding, FallbackRate, Matchup, ScheduledSlot, SlotRow
from genstrat.services import engine
from genstrat.services.agents import Agent, make_agent
from genstrat.services.hashing import fnv1a_64
from genstrat.services.schedule import CoverageRule, make_scheduler

logger = logging.getLogger(__name__)

SLOT_COLUMNS: List[str] = [
    "game_seed", "model_alice", "model_bob", "run_id", "play_seed", "margin",
    "moves_alice", "moves_bob", "fallback_alice", "fallback_bob", "status",
    "family", "anchor", "variant",
]


def derive_play_seed(game_seed: int, run_id: int, m1: str, m2: str) -> int:
    """(ゲームシード, run id, マッチアップ) から対局シードを導く

    ペアは順序なしで扱う（モデルIDで正規化する）。

    Raises:
        ValueError: m1 と m2 が同じ場合
    """
    if m1 == m2:
        raise ValueError("a matchup needs two distinct models")
    a, b = sorted((m1, m2))
    return fnv1a_64(f"{game_seed}|{run_id}|{a}|{b}")


def schedule(
    models: Sequence[str],
    games: Sequence[int],
    matches_per_matchup: int = 40,
    rule: CoverageRule = "rotation",
    min_opponents: int = 2,
    seed: int = 0,
) -> List[ScheduledSlot]:
    """対戦スロットを並べる

    各 (ペア, ゲーム) について matches_per_matchup / 2 回の run を作り、
    run ごとに同じ play_seed で席を入れ替えた2スロットを置く。

    Args:
        models (Sequence[str]): モデルID
        games (Sequence[int]): ゲームシード
        matches_per_matchup (int): 1マッチアップあたりのスロット数（偶数）
        rule (CoverageRule): ペア選択の方式
        min_opponents (int): (モデル, ゲーム) ごとの最小対戦相手数
        seed (int): スケジュールシード

    Returns:
        List[ScheduledSlot]: スロットの一覧

    Raises:
        ScheduleError: matches_per_matchup が奇数、またはモデルが足りない場合
    """
    if matches_per_matchup < 2 or matches_per_matchup % 2:
        raise ScheduleError("matches_per_matchup must be a positive even number")
    pairs_by_game = make_scheduler(rule, models, games, min_opponents, seed).generate()
    slots: List[ScheduledSlot] = []
    for game in games:
        for a, b in pairs_by_game[game]:
            for run_id in range(matches_per_matchup // 2):
                matchup = Matchup(game_seed=game, models=(a, b), run_id=run_id, play_seed=derive_play_seed(game, run_id, a, b))
                slots.append(ScheduledSlot(matchup=matchup, model_alice=a, model_bob=b))
                slots.append(ScheduledSlot(matchup=matchup, model_alice=b, model_bob=a))
    logger.info("scheduled %d slots over %d games (%s)", len(slots), len(games), rule)
    return slots


def run_slot(
    spec: GameSpec,
    binding_alice: AgentBinding,
    binding_bob: AgentBinding,
    play_seed: int,
    run_id: int = 0,
    agents: Optional[Mapping[str, Agent]] = None,
) -> SlotRow:
    """1スロットを終局まで指す

    リモートの失敗は discarded-timeout、エンジンエラーは error として行に残す。

    Args:
        spec (GameSpec): 対象ゲーム
        binding_alice (AgentBinding): Alice 席のエージェント
        binding_bob (AgentBinding): Bob 席のエージェント
        play_seed (int): 対局シード
        run_id (int): run id
        agents (Optional[Mapping[str, Agent]]): モデルIDごとの作成済みエージェント

    Returns:
        SlotRow: 結果行
    """
    bindings = {PLAYERS[0]: binding_alice, PLAYERS[1]: binding_bob}
    seated: Dict[str, Agent] = {
        seat: agents[b.model_id] if agents and b.model_id in agents else make_agent(b) for seat, b in bindings.items()
    }
    row = SlotRow(
        game_seed=spec.seed,
        model_alice=binding_alice.model_id,
        model_bob=binding_bob.model_id,
        run_id=run_id,
        play_seed=play_seed,
        margin=0,
        config_alice=binding_alice.snapshot(),
        config_bob=binding_bob.snapshot(),
    )
    moves = {seat: 0 for seat in PLAYERS}
    fallbacks = {seat: 0 for seat in PLAYERS}
    status = "ok"
    message: Optional[str] = None
    state = engine.initial_state(spec, play_seed)
    try:
        while not state.terminal:
            seat, menu = engine.legal_actions(state)
            decision = seated[seat].choose(state, seat, menu)
            moves[seat] += 1
            fallbacks[seat] += int(decision.fallback)
            engine.apply_action(state, menu[decision.index], inplace=True)
    except AgentTimeoutError as exc:
        status, message = "discarded-timeout", str(exc)
        logger.warning("slot g=%d seed=%d discarded: %s", spec.seed, play_seed, exc)
    except GenstratError as exc:
        status, message = "error", str(exc)
        logger.error("slot g=%d seed=%d aborted: %s", spec.seed, play_seed, exc)
    margin = engine.terminal_payoff(state)[0] if state.terminal else 0
    return row.model_copy(
        update={
            "margin": margin,
            "moves_alice": moves[PLAYERS[0]],
            "moves_bob": moves[PLAYERS[1]],
            "fallback_alice": fallbacks[PLAYERS[0]],
            "fallback_bob": fallbacks[PLAYERS[1]],
            "status": status,
            "message": message,
            "action_log": list(state.action_log),
        }
    )


def run_tournament(
    specs: Mapping[int, GameSpec],
    bindings: Mapping[str, AgentBinding],
    slots: Sequence[ScheduledSlot],
    workers: int = 1,
    progress: bool = False,
) -> List[SlotRow]:
    """スケジュール済みスロットをすべて実行する（結果はスロット順）"""
    missing = {s.model_alice for s in slots} | {s.model_bob for s in slots}
    missing -= set(bindings)
    if missing:
        raise ScheduleError(f"no agent binding for {sorted(missing)}")
    agents = {model_id: make_agent(b) for model_id, b in bindings.items()}

    def run(slot: ScheduledSlot) -> SlotRow:
        return run_slot(
            specs[slot.matchup.game_seed],
            bindings[slot.model_alice],
            bindings[slot.model_bob],
            slot.matchup.play_seed,
            slot.matchup.run_id,
            agents,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(tqdm(pool.map(run, slots), total=len(slots), disable=not progress, desc="slots"))
    else:
        rows = [run(slot) for slot in tqdm(slots, disable=not progress, desc="slots")]
    bad = sum(r.status != "ok" for r in rows)
    logger.info("played %d slots (%d not ok)", len(rows), bad)
    return rows


def slot_frame(rows: Sequence[SlotRow]) -> pd.DataFrame:
    """スロット行を集計用の DataFrame にする"""
    return pd.DataFrame([r.model_dump(include=set(SLOT_COLUMNS)) for r in rows], columns=SLOT_COLUMNS)


def fallback_report(rows: Sequence[SlotRow]) -> List[FallbackRate]:
    """モデルごとのフォールバック率（手数比とスロット比）

    両席を合算する。スロット比は1回以上フォールバックしたスロットの割合。
    """
    tally: Dict[str, List[int]] = {}
    for row in rows:
        for model, moves, fallback in (
            (row.model_alice, row.moves_alice, row.fallback_alice),
            (row.model_bob, row.moves_bob, row.fallback_bob),
        ):
            counts = tally.setdefault(model, [0, 0, 0, 0])
            counts[0] += moves
            counts[1] += fallback
            counts[2] += 1
            counts[3] += int(fallback > 0)
    return [
        FallbackRate(
            model_id=model,
            moves=m,
            fallback_moves=f,
            slots=s,
            fallback_slots=fs,
            move_rate=f / m if m else 0.0,
            slot_rate=fs / s if s else 0.0,
        )
        for model, (m, f, s, fs) in sorted(tally.items())
    ]


def choose_anchors(alpha: pd.Series, exclude: Sequence[str] = ()) -> Tuple[str, str]:
    """リーダーボードの上端と下端から1つずつアンカーを選ぶ"""
    ranked = alpha.drop(labels=[m for m in exclude if m in alpha.index]).sort_values(ascending=False)
    if len(ranked) < 2:
        raise ScheduleError("need at least two candidate anchors")
    return str(ranked.index[0]), str(ranked.index[-1])


def run_ablation(
    family: str,
    low: AgentBinding,
    high: AgentBinding,
    anchors: Sequence[AgentBinding],
    specs: Mapping[int, GameSpec],
    runs: int,
    progress: bool = False,
) -> List[SlotRow]:
    """低・高設定の兄弟スロットを同じ条件で指す

    (ゲーム, アンカー, run) ごとに play_seed を1つ決め、低・高それぞれを両席で指す。
    兄弟は play_seed・席・相手を共有する。

    Args:
        family (str): 変化させるモデル系列の名前
        low (AgentBinding): 低設定
        high (AgentBinding): 高設定
        anchors (Sequence[AgentBinding]): 固定する相手
        specs (Mapping[int, GameSpec]): ゲームシードから仕様
        runs (int): run 数

    Returns:
        List[SlotRow]: family / anchor / variant が付いたスロット行
    """
    if low.model_id == high.model_id:
        raise ScheduleError("low and high variants need distinct model ids")
    agents: Dict[str, Agent] = {b.model_id: make_agent(b) for b in (low, high, *anchors)}
    rows: List[SlotRow] = []
    jobs = [(g, a, r) for g in specs for a in anchors for r in range(runs)]
    for game, anchor, run_id in tqdm(jobs, disable=not progress, desc=f"ablation {family}"):
        play_seed = derive_play_seed(game, run_id, family, anchor.model_id)
        for variant, binding in (("low", low), ("high", high)):
            for alice, bob in ((binding, anchor), (anchor, binding)):
                row = run_slot(specs[game], alice, bob, play_seed, run_id, agents)
                rows.append(row.model_copy(update={"family": family, "anchor": anchor.model_id, "variant": variant}))
    return rows


def sibling_pairs(rows: Sequence[SlotRow]) -> pd.DataFrame:
    """低・高の兄弟スロットを対にしてマージンを family 側から見た値で並べる

    片方が ok でない対は除外して警告する。
    """
    records: Dict[Tuple, Dict[str, float]] = {}
    for row in rows:
        if row.family is None or row.variant is None:
            continue
        family_seat = "Alice" if row.model_bob == row.anchor else "Bob"
        key = (row.family, row.anchor, row.game_seed, row.run_id, row.play_seed, family_seat)
        entry = records.setdefault(key, {})
        if row.status == "ok":
            entry[row.variant] = float(row.margin if family_seat == "Alice" else -row.margin)
    complete = []
    dropped = 0
    for key, entry in records.items():
        if "low" in entry and "high" in entry:
            complete.append((*key, entry["low"], entry["high"]))
        else:
            dropped += 1
    if dropped:
        logger.warning("excluded %d ablation pair(s) with a missing sibling", dropped)
    return pd.DataFrame(
        complete, columns=["family", "anchor", "game_seed", "run_id", "play_seed", "seat", "low", "high"]
    )
