import logging
from typing import List, Optional, Sequence

import pandas as pd

from genstrat.services.stats.bootstrap import bootstrap_replicates, percentile_ci

logger = logging.getLogger(__name__)

ABLATION_COLUMNS: List[str] = ["family", "anchor", "delta", "lo", "hi", "n"]


def _delta(pairs: pd.DataFrame) -> float:
    return float((pairs["high"] - pairs["low"]).mean())


def ablation_delta(
    pairs: pd.DataFrame,
    B: int = 2000,
    seed: int = 0,
    families: Optional[Sequence[str]] = None,
) -> pd.DataFrame:
    """兄弟ペアの差 Δ̂ = mean(high − low) とゲームシード単位のクラスタブートストラップ区間

    (family, anchor) ごとと、family ごとにアンカーをまとめた行（anchor = "*"）を返す。

    Args:
        pairs (pd.DataFrame): sibling_pairs の出力（family 側から見たマージン）
        B (int): 複製数
        seed (int): ブートストラップシード
        families (Optional[Sequence[str]]): 期待する family。ペアのないものは警告して省く

    Returns:
        pd.DataFrame: family, anchor, delta, lo, hi, n の列
    """
    present = sorted(pairs["family"].unique()) if len(pairs) else []
    for family in families or []:
        if family not in present:
            logger.warning("no sibling pairs for family %s; omitted", family)
    rows = []
    for family in present:
        subset = pairs[pairs["family"] == family]
        groups = [(anchor, rows_) for anchor, rows_ in subset.groupby("anchor", sort=True)] + [("*", subset)]
        for anchor, group in groups:
            group = group.reset_index(drop=True)
            lo = hi = float("nan")
            if B > 0:
                replicates = bootstrap_replicates(group, _delta, B, seed, cluster_columns=["game_seed"])
                lo_v, hi_v = percentile_ci(replicates)
                lo, hi = float(lo_v[0]), float(hi_v[0])
            rows.append({"family": family, "anchor": anchor, "delta": _delta(group), "lo": lo, "hi": hi, "n": len(group)})
    return pd.DataFrame(rows, columns=ABLATION_COLUMNS)
