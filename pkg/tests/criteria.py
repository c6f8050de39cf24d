"""Collects one pass/fail line per acceptance criterion for the end-of-run summary."""

from __future__ import annotations

from contextlib import contextmanager

TITLES = {
    1: "golden toy-graph match lists",
    2: "toy end-to-end linking",
    3: "matcher agrees with brute force",
    4: "discovery agrees with brute force",
    5: "numerical checks",
    6: "walk validity",
    7: "LSH quality",
    8: "pruning monotonicity sweep",
    9: "noisy synthetic reproduction",
    10: "ablation ordering",
    11: "determinism",
}

RESULTS: dict[int, tuple[str, str]] = {}
COLLECTED = False  # set when the acceptance module is imported


@contextmanager
def criterion(number: int):
    """Record PASS with the details the body fills in, or FAIL with the error."""
    details: list[str] = []
    try:
        yield details
    except BaseException as exc:
        RESULTS[number] = ("FAIL", "; ".join(details + [f"{type(exc).__name__}: {exc}".splitlines()[0]]))
        raise
    RESULTS[number] = ("PASS", "; ".join(details))


def summary_lines() -> list[str]:
    lines = []
    for n, title in TITLES.items():
        status, detail = RESULTS.get(n, ("SKIP", "not run"))
        lines.append(f"criterion {n:2d} {status}  {title}" + (f"  ({detail})" if detail else ""))
    return lines
