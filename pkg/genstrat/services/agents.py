import logging
import os
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Protocol, Tuple

import httpx
import numpy as np

from genstrat.errors import AgentTimeoutError
from genstrat.schemas.game import GameSpec
from genstrat.schemas.tournament import AgentBinding
from genstrat.services import engine, solver
from genstrat.services.axes import l1_best_response, run_l0
from genstrat.services.engine import ActionChoice, GameState
from genstrat.services.policy import TabularPolicy, sample_index, uniform
from genstrat.services.textio import parse_reply, render_observation, render_rulebook

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgentDecision:
    index: int
    fallback: bool = False
    path: str = "policy"


class Agent(Protocol):
    binding: AgentBinding

    def choose(self, state: GameState, seat: str, menu: List[ActionChoice]) -> AgentDecision: ...


@lru_cache(maxsize=64)
def cached_l1(spec: GameSpec, episodes: int) -> TabularPolicy:
    """ゲームごとに1度だけ L1 を推定する"""
    return l1_best_response(run_l0(spec, episodes, seed=0))


@lru_cache(maxsize=16)
def cached_solution(spec: GameSpec, level: str, iterations: int) -> Tuple[solver.AbstractGame, solver.Strategy]:
    game = solver.abstract_game(spec, level)  # type: ignore[arg-type]
    result = solver.cfr_plus_solve(game, iterations)
    return game, result.strategy


class RandomAgent:
    """一様ランダム"""

    def __init__(self, binding: AgentBinding) -> None:
        self.binding = binding

    def choose(self, state: GameState, seat: str, menu: List[ActionChoice]) -> AgentDecision:
        rng = state.stream(f"agent:{seat}")
        return AgentDecision(index=int(rng.integers(len(menu))))


class L1Agent:
    """L0 に対する経験的最適応答で指す"""

    def __init__(self, binding: AgentBinding) -> None:
        self.binding = binding

    def _l1_index(self, state: GameState, seat: str, menu: List[ActionChoice]) -> int:
        policy = cached_l1(state.spec, self.binding.l1_episodes)
        probs = policy.distribution(engine.observe(state, seat), len(menu))
        return sample_index(probs, state.stream(f"agent:{seat}"))

    def choose(self, state: GameState, seat: str, menu: List[ActionChoice]) -> AgentDecision:
        return AgentDecision(index=self._l1_index(state, seat, menu))


class MixtureAgent(L1Agent):
    """確率 epsilon で一様ランダム、それ以外は L1"""

    def choose(self, state: GameState, seat: str, menu: List[ActionChoice]) -> AgentDecision:
        rng = state.stream(f"agent:{seat}")
        if rng.random() < self.binding.epsilon:
            return AgentDecision(index=int(rng.integers(len(menu))))
        return AgentDecision(index=self._l1_index(state, seat, menu))


class CFRPlusAgent:
    """CFR+ の平均戦略から確率的に指す

    抽象情報集合が見つからない場合は一様分布。
    """

    def __init__(self, binding: AgentBinding) -> None:
        self.binding = binding

    def distribution(self, state: GameState, seat: str, menu: List[ActionChoice]) -> np.ndarray:
        game, strategy = cached_solution(state.spec, self.binding.level, self.binding.cfr_iterations)
        index = game.index_of(solver.abstract_key(state, seat, self.binding.level))
        if index is None:
            return uniform(len(menu))
        labels = game.labels[index]
        weights = np.array([strategy[index][labels.index(c.label)] if c.label in labels else 0.0 for c in menu])
        total = weights.sum()
        return weights / total if total > 0 else uniform(len(menu))

    def choose(self, state: GameState, seat: str, menu: List[ActionChoice]) -> AgentDecision:
        probs = self.distribution(state, seat, menu)
        return AgentDecision(index=sample_index(probs, state.stream(f"agent:{seat}")))


class RemoteAgent:
    """HTTP 越しのテキスト補完エージェント

    ルールブックをシステムプロンプト、観測をユーザープロンプトとして1往復で送り、
    返答本文をそのまま parse_reply に渡す。

    Args:
        binding (AgentBinding): endpoint を持つ remote バインディング
        client (Optional[httpx.Client]): テスト用に差し替え可能なクライアント
    """

    def __init__(self, binding: AgentBinding, client: Optional[httpx.Client] = None) -> None:
        if binding.endpoint is None:
            raise ValueError(f"remote binding {binding.model_id!r} has no endpoint")
        self.binding = binding
        self.endpoint = binding.endpoint
        self.client: httpx.Client = client or httpx.Client(timeout=self.endpoint.timeout)
        self._rulebooks: Dict[str, str] = {}

    def _headers(self) -> Dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.endpoint.api_key_env:
            key = os.environ.get(self.endpoint.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def _rulebook(self, spec: GameSpec) -> str:
        name = f"{spec.seed}:{spec.builder_version}"
        if name not in self._rulebooks:
            self._rulebooks[name] = render_rulebook(spec)
        return self._rulebooks[name]

    def complete(self, system: str, prompt: str) -> str:
        """リトライ付きで1回分の補完を取得する

        Raises:
            AgentTimeoutError: 全試行が失敗した場合
        """
        body = {
            "model": self.endpoint.snapshot_tag,
            "capability_tier": self.endpoint.thinking_tier,
            "system": system,
            "prompt": prompt,
            **self.endpoint.options,
        }
        for attempt in range(self.endpoint.attempts):
            try:
                response = self.client.post(self.endpoint.url, json=body, headers=self._headers())
                response.raise_for_status()
                return response.text
            except httpx.HTTPError as exc:
                logger.warning(
                    "%s attempt %d/%d failed: %s", self.binding.model_id, attempt + 1, self.endpoint.attempts, exc
                )
                if attempt + 1 < self.endpoint.attempts:
                    time.sleep(self.endpoint.backoff * 2**attempt)
        raise AgentTimeoutError(f"{self.binding.model_id} exhausted {self.endpoint.attempts} attempts")

    def choose(self, state: GameState, seat: str, menu: List[ActionChoice]) -> AgentDecision:
        reply = self.complete(self._rulebook(state.spec), render_observation(state, seat))
        result = parse_reply(reply, [c.label for c in menu], state.stream(f"fallback:{seat}"))
        return AgentDecision(index=result.index, fallback=result.path == "fallback", path=result.path)


def make_agent(binding: AgentBinding, client: Optional[httpx.Client] = None) -> Agent:
    """バインディングからエージェントを作る"""
    if binding.kind == "random":
        return RandomAgent(binding)
    if binding.kind == "l1":
        return L1Agent(binding)
    if binding.kind == "mixture":
        return MixtureAgent(binding)
    if binding.kind == "cfr_plus":
        return CFRPlusAgent(binding)
    return RemoteAgent(binding, client=client)
