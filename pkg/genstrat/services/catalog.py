from typing import Callable, Dict, List, Optional, Sequence

from genstrat.schemas.game import (
    PLAYERS,
    SHOWDOWN,
    DeckConfig,
    GameSpec,
    Phase,
    PileDecl,
    ShowdownMetric,
    Transition,
    VariableDecl,
)

FIXTURE_VERSION: str = "fixture"


def declarations(phase_ids: Sequence[str], initial_stack: int):
    """標準のパイル宣言と変数宣言を作る

    Args:
        phase_ids (Sequence[str]): フェーズIDの一覧（ラウンドカウンタ用）
        initial_stack (int): 初期スタック

    Returns:
        tuple: (パイル宣言, 変数宣言)
    """
    piles = (
        PileDecl(name="deck", visibility="hidden"),
        PileDecl(name="board", visibility="public"),
        PileDecl(name="muck", visibility="hidden"),
    ) + tuple(PileDecl(name=f"hand:{p}", visibility="owner-only", owner=p) for p in PLAYERS)
    variables = (
        (VariableDecl(name="pot", initial=0),)
        + tuple(VariableDecl(name=f"stack:{p}", initial=initial_stack) for p in PLAYERS)
        + tuple(VariableDecl(name=f"rounds:{pid}", initial=0) for pid in phase_ids)
    )
    return piles, variables


def assemble_spec(
    seed: int,
    phases: Sequence[Phase],
    deck: DeckConfig,
    name: str = "",
    hand_size: int = 1,
    ante: int = 1,
    initial_stack: int = 10,
    showdown_metric: ShowdownMetric = "high_card",
    dial: float = 0.0,
    builder_version: str = FIXTURE_VERSION,
    phase_visit_cap: int = 2,
    start: Optional[str] = None,
) -> GameSpec:
    """フェーズ列から GameSpec を組み立てる"""
    ids = [p.id for p in phases]
    piles, variables = declarations(ids, initial_stack)
    return GameSpec(
        seed=seed,
        dial=dial,
        builder_version=builder_version,
        name=name,
        deck=deck,
        hand_size=hand_size,
        ante=ante,
        initial_stack=initial_stack,
        piles=piles,
        variables=variables,
        phases=tuple(phases),
        start=start or ids[0],
        showdown_metric=showdown_metric,
        phase_visit_cap=phase_visit_cap,
    )


def to(target: str) -> tuple:
    return (Transition(target=target),)


def kuhn(ranks: int = 3) -> GameSpec:
    """クーンポーカー（ranks=5 で Kuhn 風の拡張版）"""
    betting = Phase(id="betting", kind="action", style="betting", bet_sizes=(1,), transitions=to(SHOWDOWN))
    return assemble_spec(
        seed=-ranks,
        name="kuhn" if ranks == 3 else f"kuhn-{ranks}",
        phases=[betting],
        deck=DeckConfig(ranks=ranks, suits=1),
    )


def kuhn_like() -> GameSpec:
    return kuhn(ranks=5)


def leduc_like() -> GameSpec:
    """2ラウンドのベッティングと公開カード1枚"""
    phases = [
        Phase(id="preflop", kind="action", style="betting", bet_sizes=(2,), max_raises=1, transitions=to("flop")),
        Phase(id="flop", kind="observation", observation="deal_public", count=1, transitions=to("turn")),
        Phase(id="turn", kind="action", style="betting", bet_sizes=(4,), max_raises=1, transitions=to(SHOWDOWN)),
    ]
    return assemble_spec(
        seed=-100,
        name="leduc-like",
        phases=phases,
        deck=DeckConfig(ranks=3, suits=2),
        initial_stack=20,
        showdown_metric="pairs",
    )


def matching_pennies(stake: int = 1) -> GameSpec:
    """同時手番のサイドベットだけのゲーム

    両者の手札は常に同じラベルになるため、各席の文脈は1つだけ。
    """
    phase = Phase(id="pennies", kind="simultaneous", simultaneous="side_bet", stake=stake, transitions=to(SHOWDOWN))
    return assemble_spec(
        seed=-200,
        name="matching-pennies",
        phases=[phase],
        deck=DeckConfig(ranks=1, suits=1, copies=2),
    )


FIXTURES: Dict[str, Callable[[], GameSpec]] = {
    "kuhn": kuhn,
    "kuhn-like": kuhn_like,
    "leduc-like": leduc_like,
    "matching-pennies": matching_pennies,
}


def fixture(name: str) -> GameSpec:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}")
    return FIXTURES[name]()


def fixture_names() -> List[str]:
    return sorted(FIXTURES)


def fixture_by_seed(seed: int) -> GameSpec:
    """負のシードからフィクスチャを引く"""
    for build in FIXTURES.values():
        spec = build()
        if spec.seed == seed:
            return spec
    raise KeyError(f"no fixture has seed {seed}")
