"""Shared store for acceptance outcomes, printed by the terminal summary hook."""

RESULTS: dict[int, tuple[bool, str]] = {}


def record(number: int, ok: bool, detail: str) -> bool:
    """Merge ``ok`` into criterion ``number`` (all parts must pass) and echo it."""
    prev_ok, prev_detail = RESULTS.get(number, (True, ""))
    RESULTS[number] = (prev_ok and bool(ok), f"{prev_detail}; {detail}" if prev_detail else detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    return bool(ok)
