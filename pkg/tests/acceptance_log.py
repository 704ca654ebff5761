"""Outcome of each acceptance criterion, printed at the end of the session."""

from contextlib import contextmanager

RESULTS: dict[int, tuple[str, bool, str]] = {}


@contextmanager
def criterion(number: int, name: str):
    """Record PASS with the detail set on the yielded dict, or FAIL with the error."""
    info = {"detail": ""}
    try:
        yield info
    except BaseException as exc:
        RESULTS[number] = (name, False, str(exc).splitlines()[0] if str(exc) else type(exc).__name__)
        print(f"[FAIL] {number}. {name}: {RESULTS[number][2]}")
        raise
    RESULTS[number] = (name, True, info["detail"])
    print(f"[PASS] {number}. {name}: {info['detail']}")
