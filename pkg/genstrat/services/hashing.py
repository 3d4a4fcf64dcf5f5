FNV_OFFSET: int = 0xCBF29CE484222325
FNV_PRIME: int = 0x100000001B3
MASK_64: int = (1 << 64) - 1


def fnv1a_64(text: str) -> int:
    """FNV-1a 64bit ダイジェスト

    プロセスやプラットフォームに依存しない安定なハッシュ。

    Args:
        text (str): 対象文字列（UTF-8 でエンコード）

    Returns:
        int: 64bit 符号なし整数
    """
    digest: int = FNV_OFFSET
    for byte in text.encode("utf-8"):
        digest ^= byte
        digest = (digest * FNV_PRIME) & MASK_64
    return digest
