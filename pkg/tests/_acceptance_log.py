"""Shared record of acceptance outcomes, printed by the conftest summary hook."""

RESULTS = []


def record(number, name, passed, detail=""):
    """``passed=None`` marks a criterion that could not run here."""
    RESULTS.append((number, name, None if passed is None else bool(passed), detail))
