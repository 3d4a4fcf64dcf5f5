from typing import Sequence

import numpy as np


def bh_fdr(pvalues: Sequence[float], q: float = 0.05) -> np.ndarray:
    """Benjamini-Hochberg のステップアップ法

    p_(i) <= i q / m を満たす最大の i* までをすべて棄却する。NaN は棄却しない。

    Args:
        pvalues (Sequence[float]): p 値
        q (float): FDR 水準

    Returns:
        np.ndarray: 入力順の棄却フラグ
    """
    p = np.asarray(pvalues, dtype=float)
    reject = np.zeros(len(p), dtype=bool)
    valid = np.flatnonzero(~np.isnan(p))
    m = len(valid)
    if m == 0:
        return reject
    order = valid[np.argsort(p[valid], kind="mergesort")]
    thresholds = q * np.arange(1, m + 1) / m
    passing = np.flatnonzero(p[order] <= thresholds)
    if len(passing):
        reject[order[: passing[-1] + 1]] = True
    return reject


def bh_qvalues(pvalues: Sequence[float]) -> np.ndarray:
    """BH 調整済み q 値（単調化済み）"""
    p = np.asarray(pvalues, dtype=float)
    q = np.full(len(p), np.nan)
    valid = np.flatnonzero(~np.isnan(p))
    m = len(valid)
    if m == 0:
        return q
    order = valid[np.argsort(p[valid], kind="mergesort")]
    scaled = p[order] * m / np.arange(1, m + 1)
    q[order] = np.minimum(np.minimum.accumulate(scaled[::-1])[::-1], 1.0)
    return q
