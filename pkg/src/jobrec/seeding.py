import hashlib


def derive_seed(root: int, name: str) -> int:
    """Named sub-seed so each component's randomness is reproducible alone."""
    digest = hashlib.sha256(f"{root}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")
