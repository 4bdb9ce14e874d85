"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

RESULTS: dict[str, tuple[bool, str]] = {}


def record(name: str, ok: bool, detail: str) -> bool:
    RESULTS[name] = (bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return bool(ok)
