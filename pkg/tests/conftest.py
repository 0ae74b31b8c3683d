import pytest

from etmarket.model import BuyerSpec, MarketParams, RiskNeutral

# criterion -> list of (part, ok, detail), in first-seen order
_ACCEPTANCE: dict[str, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance check; the summary prints one line per criterion."""

    def record(name: str, ok: bool, detail: str = "", part: str = "") -> None:
        _ACCEPTANCE.setdefault(name, []).append((part, bool(ok), detail))
        assert ok, f"{name} {part}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, parts in _ACCEPTANCE.items():
        ok = all(p[1] for p in parts)
        failed = [p[0] or p[2] for p in parts if not p[1]]
        detail = "; ".join(f"{p}: {d}" if p else d for p, _, d in parts if d or p)
        if failed:
            detail = "failed: " + ", ".join(failed) + " | " + detail
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}  {detail}")


def make_market(n, specs, pbs=None):
    """specs: iterable of (id, r, mev) or (id, r, mev, risk)."""
    buyers = []
    for s in specs:
        bid, r, mev, *rest = s
        buyers.append(BuyerSpec(bid, r, rest[0] if rest else RiskNeutral(), mev))
    return MarketParams(n, tuple(buyers), pbs)
