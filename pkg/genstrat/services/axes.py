import logging
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd
from scipy.stats import qmc

from genstrat.errors import InsufficientDataError
from genstrat.schemas.axes import AxisVector, MeasurementTier
from genstrat.schemas.game import PLAYERS, GameSpec
from genstrat.services import engine
from genstrat.services.engine import GameState, other_seat
from genstrat.services.hashing import fnv1a_64
from genstrat.services.policy import Policy, SimplexPolicy, TabularPolicy, UniformPolicy, sample_index

logger = logging.getLogger(__name__)

RISK_MIN_VISITS: int = 20
RISK_MIN_ACTION_VISITS: int = 5
RISK_QUANTILE: float = 0.10
REPORT_FLOOR: float = 0.01
BRITTLENESS_EPSILON: float = 1e-6

VISIT_COLUMNS: List[str] = ["episode", "seat", "info", "coarse", "dt", "action", "n_options", "entry", "payoff"]


def measurement_rng(seed: int, spec: GameSpec, label: str) -> np.random.Generator:
    entropy = [seed & ((1 << 64) - 1), spec.seed & ((1 << 64) - 1), fnv1a_64(label)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@dataclass
class EpisodeLog:
    """L0 エピソードログ

    Attributes:
        visits (pd.DataFrame): 意思決定1回につき1行（VISIT_COLUMNS）
        payoffs (np.ndarray): エピソードごとの Alice の収支
    """

    visits: pd.DataFrame
    payoffs: np.ndarray

    @property
    def n_eps(self) -> int:
        return len(self.payoffs)

    @property
    def sigma_u(self) -> float:
        return float(np.std(self.payoffs)) if len(self.payoffs) else 0.0

    @property
    def max_options(self) -> int:
        return int(self.visits["n_options"].max()) if len(self.visits) else 1

    def dt_counts(self, seat: Optional[str] = None) -> pd.Series:
        rows = self.visits if seat is None else self.visits[self.visits["seat"] == seat]
        return rows["dt"].value_counts().sort_index()


def _finish(state: GameState, policies: Dict[str, Policy], rng: Optional[np.random.Generator] = None) -> GameState:
    while not state.terminal:
        seat, menu = engine.legal_actions(state)
        info = engine.observe(state, seat)
        probs = policies[seat].distribution(info, len(menu))
        index = sample_index(probs, rng if rng is not None else state.stream(f"agent:{seat}"))
        engine.apply_action(state, menu[index], inplace=True)
    return state


def _episode_rows(
    spec: GameSpec,
    play_seed: int,
    policies: Dict[str, Policy],
    rng: np.random.Generator,
    record: Set[str],
    episode: int,
) -> Tuple[List[list], Tuple[int, int]]:
    state = engine.initial_state(spec, play_seed)
    rows: List[list] = []
    while not state.terminal:
        seat, menu = engine.legal_actions(state)
        info = engine.observe(state, seat)
        index = sample_index(policies[seat].distribution(info, len(menu)), rng)
        if seat in record:
            # entry はフェーズへの通算進入回数
            rows.append(
                [episode, seat, info.key(), info.coarse_key(), info.decision_type.key(), index, len(menu), sum(state.rounds.values())]
            )
        engine.apply_action(state, menu[index], inplace=True)
    margins = engine.terminal_payoff(state)
    by_seat = {PLAYERS[0]: margins[0], PLAYERS[1]: margins[1]}
    for row in rows:
        row.append(by_seat[row[1]])
    return rows, margins


def run_l0(spec: GameSpec, episodes: int, seed: int = 0) -> EpisodeLog:
    """両席一様ランダムのエピソードを実行してログを作る

    Args:
        spec (GameSpec): 受理済みのゲーム
        episodes (int): エピソード数
        seed (int): 計測シード

    Returns:
        EpisodeLog: 訪問ログ
    """
    rng = measurement_rng(seed, spec, "l0")
    uniform_policy = UniformPolicy()
    policies: Dict[str, Policy] = {seat: uniform_policy for seat in PLAYERS}
    rows: List[list] = []
    payoffs: List[int] = []
    for episode in range(episodes):
        ep_rows, margins = _episode_rows(spec, int(rng.integers(2**63)), policies, rng, set(PLAYERS), episode)
        rows.extend(ep_rows)
        payoffs.append(margins[0])
    visits = pd.DataFrame(rows, columns=VISIT_COLUMNS)
    return EpisodeLog(visits=visits, payoffs=np.asarray(payoffs, dtype=float))


def _best_actions(visits: pd.DataFrame, keys: List[str]) -> pd.DataFrame:
    """キーごとに平均利得が最大の行動（同点は小さい添字）"""
    means = visits.groupby(keys + ["action"], sort=True)["payoff"].mean().reset_index()
    means = means.sort_values(keys + ["payoff", "action"], ascending=[True] * len(keys) + [False, True], kind="mergesort")
    return means.drop_duplicates(keys, keep="first")[keys + ["action"]]


def l1_best_response(log: EpisodeLog) -> TabularPolicy:
    """L0 ログに対する経験的最適応答 L1

    データのある情報状態では経験的期待利得が最大の行動に確率1を置く。

    Args:
        log (EpisodeLog): L0 ログ

    Returns:
        TabularPolicy: 未訪問の状態では一様分布に戻る方策
    """
    if log.visits.empty:
        raise InsufficientDataError("L0 log has no decisions")
    best = _best_actions(log.visits, ["info"])
    n_options = log.visits.groupby("info")["n_options"].first()
    table: Dict[str, np.ndarray] = {}
    for info, action in zip(best["info"], best["action"]):
        probs = np.zeros(int(n_options[info]))
        probs[int(action)] = 1.0
        table[info] = probs
    return TabularPolicy(table)


def axis_state_space(log: EpisodeLog) -> float:
    """各席が訪れた異なる情報状態数の合計の log10"""
    if log.visits.empty:
        raise InsufficientDataError("state space needs at least one decision")
    distinct = int(log.visits.groupby("seat")["info"].nunique().sum())
    return float(np.log10(distinct))


def axis_temporal_depth(log: EpisodeLog) -> float:
    """Σ_d f_d η_d² r_d

    η_d² はエピソード×席ごとの初回訪問で集計する。
    r_d は同じ席が d の後に迎える意思決定の平均回数。数えるのは d より後の
    フェーズ進入（entry が大きい）に属する意思決定だけで、同じフェーズ進入の中で続く
    手番（同じベッティングラウンド内のコールなど）は含めない。このため
    ベッティングフェーズが1つの Kuhn 型ゲームでは 0 になる。
    """
    visits = log.visits
    if visits.empty:
        return 0.0
    visits = visits.copy()
    visits["later"] = visits.groupby(["episode", "seat"])["entry"].transform(
        lambda e: len(e) - np.searchsorted(e.to_numpy(), e.to_numpy(), side="right")
    )
    first = visits.drop_duplicates(["dt", "episode", "seat"], keep="first")
    total = 0.0
    for dt, rows in visits.groupby("dt"):
        f_d = len(rows) / log.n_eps
        r_d = float(rows["later"].mean())
        fv = first[first["dt"] == dt]
        overall = fv["payoff"].mean()
        denominator = float(((fv["payoff"] - overall) ** 2).sum())
        if denominator == 0.0 or r_d == 0.0:
            continue
        groups = fv.groupby("action")["payoff"].agg(["count", "mean"])
        numerator = float((groups["count"] * (groups["mean"] - overall) ** 2).sum())
        total += f_d * (numerator / denominator) * r_d
    return total


def axis_info_sensitivity(log: EpisodeLog) -> float:
    """情報状態での最善手と decision type での最善手が食い違う割合（訪問重み付き）"""
    visits = log.visits
    if visits.empty:
        return 0.0
    by_info = _best_actions(visits, ["seat", "info"]).rename(columns={"action": "best_info"})
    by_dt = _best_actions(visits, ["dt"]).rename(columns={"action": "best_dt"})
    weights = visits.groupby(["seat", "info"]).agg(weight=("episode", "nunique"), dt=("dt", "first")).reset_index()
    table = weights.merge(by_info, on=["seat", "info"]).merge(by_dt, on="dt")
    differs = (table["best_info"] != table["best_dt"]).astype(float)
    value = float((table["weight"] * differs).sum() / table["weight"].sum())
    return min(max(value, 0.0), 1.0)


def sobol_unit(n: int, dim: int, skip: int = 0) -> np.ndarray:
    """スクランブルなし Sobol 列（原点を飛ばすので最初の点は全成分 0.5）"""
    sampler = qmc.Sobol(d=dim, scramble=False)
    sampler.fast_forward(1 + skip)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return sampler.random(n)


def sobol_simplex(
    n: int,
    dim: int,
    refine_hint: Optional[Sequence[np.ndarray]] = None,
    skip: int = 0,
    radius: float = 0.1,
) -> np.ndarray:
    """Sobol 点を確率単体へ写す

    各座標を -ln(1-u) で指数間隔に変換して正規化する。
    refine_hint がある場合は各アンカーの近傍 (1-radius)·anchor + radius·点 に集める。

    Args:
        n (int): 点の数
        dim (int): 単体の次元（2以上）
        refine_hint (Optional[Sequence[np.ndarray]]): 細分化のアンカー
        skip (int): 読み飛ばす Sobol 点の数
        radius (float): 細分化の半径

    Returns:
        np.ndarray: 形状 (n, dim) の単体上の点
    """
    if dim < 2:
        raise ValueError("simplex dimension must be at least 2")
    spacings = -np.log1p(-sobol_unit(n, dim, skip))
    sums = spacings.sum(axis=1, keepdims=True)
    points = np.where(sums > 0, spacings / np.where(sums > 0, sums, 1.0), 1.0 / dim)
    if refine_hint is not None and len(refine_hint) > 0:
        anchors = np.asarray(refine_hint, dtype=float)
        picked = anchors[np.arange(n) % len(anchors)]
        points = (1.0 - radius) * picked + radius * points
    return points


def _focal_best_actions(
    spec: GameSpec, point: np.ndarray, playouts: int, rng: np.random.Generator
) -> Dict[str, int]:
    opponent = SimplexPolicy(point)
    uniform_policy = UniformPolicy()
    sums: Dict[Tuple[str, int], float] = defaultdict(float)
    counts: Dict[Tuple[str, int], int] = defaultdict(int)
    for j in range(playouts):
        focal = PLAYERS[j % 2]
        policies: Dict[str, Policy] = {focal: uniform_policy, other_seat(focal): opponent}
        rows, _ = _episode_rows(spec, int(rng.integers(2**63)), policies, rng, {focal}, j)
        for row in rows:
            key = (row[4], row[5])
            sums[key] += row[-1]
            counts[key] += 1
    best: Dict[str, Tuple[float, int]] = {}
    for (dt, action), total in sorted(sums.items()):
        mean = total / counts[(dt, action)]
        if dt not in best or mean > best[dt][0]:
            best[dt] = (mean, action)
    return {dt: action for dt, (_, action) in best.items()}


def _modal_shares(argmaxes: List[Dict[str, int]]) -> Dict[str, Tuple[float, int]]:
    per_dt: Dict[str, List[int]] = defaultdict(list)
    for table in argmaxes:
        for dt, action in table.items():
            per_dt[dt].append(action)
    shares: Dict[str, Tuple[float, int]] = {}
    for dt, actions in per_dt.items():
        counter = Counter(actions)
        modal = min(counter, key=lambda a: (-counter[a], a))
        shares[dt] = (counter[modal] / len(actions), modal)
    return shares


def axis_opponent_modeling(
    spec: GameSpec, tier: MeasurementTier, seed: int = 0, log: Optional[EpisodeLog] = None
) -> float:
    """相手方策によって最善応答が入れ替わる度合い

    Sobol 方策の大域パス後、最頻最善応答が不安定な decision type の周辺を細分化する。

    Args:
        spec (GameSpec): 対象ゲーム
        tier (MeasurementTier): 予算
        seed (int): 計測シード
        log (Optional[EpisodeLog]): w_dt 用の L0 ログ（省略時は実行する）

    Returns:
        float: [0, 1] の値
    """
    log = log if log is not None else run_l0(spec, tier.l0_episodes, seed)
    counts = log.dt_counts()
    if counts.empty:
        return 0.0
    weights = counts / counts.sum()
    dim = max(log.max_options, 2)
    rng = measurement_rng(seed, spec, "opponent_modeling")

    points = sobol_simplex(tier.sobol_global, dim)
    argmaxes = [_focal_best_actions(spec, p, tier.playouts, rng) for p in points]
    shares = _modal_shares(argmaxes)

    if tier.sobol_refine > 0:
        unstable = {dt for dt, (share, _) in shares.items() if share < tier.unstable_share}
        anchors = [
            points[i]
            for i, table in enumerate(argmaxes)
            if any(dt in table and table[dt] != shares[dt][1] for dt in unstable)
        ]
        logger.debug("opponent modeling: %d unstable dts, %d anchors", len(unstable), len(anchors))
        refined = sobol_simplex(
            tier.sobol_refine, dim, refine_hint=anchors or None, skip=tier.sobol_global, radius=tier.refine_radius
        )
        argmaxes.extend(_focal_best_actions(spec, p, tier.playouts, rng) for p in refined)
        shares = _modal_shares(argmaxes)

    value = sum(float(w) * (1.0 - shares.get(dt, (1.0, 0))[0]) for dt, w in weights.items())
    return min(max(value, 0.0), 1.0)


def risk_by_seat(log: EpisodeLog) -> Dict[str, float]:
    """席ごとのリスク値（対象となる文脈がない席は含めない）"""
    sigma = log.sigma_u
    result: Dict[str, float] = {}
    if sigma == 0.0:
        return result
    for seat, rows in log.visits.groupby("seat"):
        total_visits = len(rows)
        score = 0.0
        eligible = 0
        for _, ctx in rows.groupby("coarse"):
            if len(ctx) < RISK_MIN_VISITS:
                continue
            stats = ctx.groupby("action")["payoff"].agg(
                count="count", ev="mean", floor=lambda u: float(np.quantile(u, RISK_QUANTILE))
            )
            stats = stats[stats["count"] >= RISK_MIN_ACTION_VISITS]
            if len(stats) < 2:
                continue
            eligible += 1
            # 同点は小さい添字
            a_star = stats.sort_values(["ev"], ascending=False, kind="mergesort").index[0]
            a_safe = stats.sort_values(["floor"], ascending=False, kind="mergesort").index[0]
            gap = float(stats.loc[a_star, "ev"] - stats.loc[a_safe, "ev"])
            score += (len(ctx) / total_visits) * gap / sigma
        if eligible:
            result[str(seat)] = score
    return result


def axis_risk(log: EpisodeLog) -> float:
    """期待値最大の行動から下位10%点最大の行動へ切り替えるコスト（σ_U 単位）"""
    seats = risk_by_seat(log)
    if not seats:
        return 0.0
    value = float(np.mean(list(seats.values())))
    return 0.0 if value < REPORT_FLOOR else value


def ols_slope(delta: np.ndarray, indicator: np.ndarray) -> float:
    """0/1 指示変数への OLS 傾き

    両群があれば群平均の差（切片ありの OLS と一致）、片方しかなければ原点回帰。
    """
    delta = np.asarray(delta, dtype=float)
    indicator = np.asarray(indicator, dtype=bool)
    if not indicator.any():
        return 0.0
    if indicator.all():
        return float(delta.mean())
    return float(delta[indicator].mean() - delta[~indicator].mean())


def _fork_delta(
    spec: GameSpec,
    play_seed: int,
    focal: str,
    l1: TabularPolicy,
    opponent: Policy,
    target_dt: str,
    rng: np.random.Generator,
) -> float:
    policies: Dict[str, Policy] = {focal: l1, other_seat(focal): opponent}
    state = engine.initial_state(spec, play_seed)
    while not state.terminal:
        seat, menu = engine.legal_actions(state)
        info = engine.observe(state, seat)
        if seat == focal and info.decision_type.key() == target_dt:
            break
        probs = policies[seat].distribution(info, len(menu))
        engine.apply_action(state, menu[sample_index(probs, state.stream(f"agent:{seat}"))], inplace=True)
    if state.terminal:
        return 0.0
    seat, menu = engine.legal_actions(state)
    base = sample_index(l1.distribution(info, len(menu)), state.stream(f"agent:{seat}"))
    alternatives = [i for i in range(len(menu)) if i != base]
    if not alternatives:
        return 0.0
    alternative = alternatives[int(rng.integers(len(alternatives)))]
    # 分岐後は同じ乱数ストリームを共有する
    fork = state.clone()
    engine.apply_action(state, menu[base], inplace=True)
    engine.apply_action(fork, menu[alternative], inplace=True)
    sign = 1 if focal == PLAYERS[0] else -1
    base_margin = engine.terminal_payoff(_finish(state, policies))[0]
    fork_margin = engine.terminal_payoff(_finish(fork, policies))[0]
    return float(sign * (fork_margin - base_margin))


def _focal_dt_weights(
    spec: GameSpec, log: EpisodeLog, l1: TabularPolicy, focal: str, tier: MeasurementTier, seed: int
) -> pd.Series:
    if tier.l1_episodes <= 0:
        counts = log.dt_counts(focal)
    else:
        rng = measurement_rng(seed, spec, f"l1_weights:{focal}")
        policies: Dict[str, Policy] = {focal: l1, other_seat(focal): UniformPolicy()}
        tally: Counter = Counter()
        for episode in range(max(1, tier.l1_episodes // 2)):
            rows, _ = _episode_rows(spec, int(rng.integers(2**63)), policies, rng, {focal}, episode)
            tally.update(row[4] for row in rows)
        counts = pd.Series(tally, dtype=float).sort_index()
    if counts.empty:
        return counts
    return counts / counts.sum()


def axis_brittleness(
    spec: GameSpec,
    l1: TabularPolicy,
    tier: MeasurementTier,
    log: EpisodeLog,
    seed: int = 0,
) -> float:
    """L1 方策を1つの decision type で少しずらしたときの利得の揺れ（log10）

    各試行は1つの decision type で方策質量 shift を一様に選んだ別の行動へ移す。
    分岐プレイアウトで変化量を測り、decision type ごとの指示変数への OLS 傾きを
    単位質量あたりに直して集計する。

    Args:
        spec (GameSpec): 対象ゲーム
        l1 (TabularPolicy): 焦点プレイヤーの L1 方策
        tier (MeasurementTier): 予算
        log (EpisodeLog): σ_U と decision type の取得に使う L0 ログ
        seed (int): 計測シード

    Returns:
        float: 両席平均の log10 値（内側の和は BRITTLENESS_EPSILON で下限を取る）
    """
    sigma = log.sigma_u
    dim = max(log.max_options, 2)
    seat_values: List[float] = []
    for focal in PLAYERS:
        weights = _focal_dt_weights(spec, log, l1, focal, tier, seed)
        dts = sorted(log.dt_counts(focal).index)
        inner = 0.0
        if dts and sigma > 0:
            rng = measurement_rng(seed, spec, f"brittleness:{focal}")
            opponents = [SimplexPolicy(p) for p in rng.dirichlet(np.ones(dim), size=tier.brittleness_opponents)]
            trial_dts: List[str] = []
            trial_deltas: List[float] = []
            for trial in range(tier.brittleness_trials):
                target = dts[trial % len(dts)]
                deltas = [
                    _fork_delta(spec, int(rng.integers(2**63)), focal, l1, opponent, target, rng)
                    for opponent in opponents
                    for _ in range(tier.brittleness_playouts)
                ]
                trial_dts.append(target)
                trial_deltas.append(tier.shift * float(np.mean(deltas)))
            deltas_arr = np.asarray(trial_deltas)
            for dt in sorted(set(trial_dts)):
                indicator = np.asarray([t == dt for t in trial_dts])
                beta = ols_slope(deltas_arr, indicator) / tier.shift
                inner += float(weights.get(dt, 0.0)) * abs(beta) / sigma
        seat_values.append(float(np.log10(max(inner, BRITTLENESS_EPSILON))))
    return float(np.mean(seat_values))


def measure_axes(spec: GameSpec, tier: MeasurementTier, seed: int = 0) -> AxisVector:
    """6軸をまとめて計測する

    Args:
        spec (GameSpec): 受理済みのゲーム
        tier (MeasurementTier): 予算
        seed (int): 計測シード

    Returns:
        AxisVector: 6軸の値と計測メタデータ
    """
    log = run_l0(spec, tier.l0_episodes, seed)
    l1 = l1_best_response(log)
    risk_seats = risk_by_seat(log)
    vector = AxisVector(
        seed=spec.seed,
        state_space_log10=axis_state_space(log),
        temporal_depth=axis_temporal_depth(log),
        info_sensitivity=axis_info_sensitivity(log),
        opponent_modeling=axis_opponent_modeling(spec, tier, seed, log=log),
        risk=axis_risk(log),
        brittleness_log10=axis_brittleness(spec, l1, tier, log, seed),
        tier=tier.name,
        measurement_seed=seed,
        risk_seats=",".join(sorted(risk_seats)),
    )
    logger.debug("axes for seed %d: %s", spec.seed, vector.values())
    return vector
