import pytest

from missingcd.graph import MGraph, Pattern, orient_edge, skeleton_of


def xyzw_mgraph() -> MGraph:
    """X -> Y -> Z -> W with X -> Z, Y -> W; Y self-masking, Z drives R_W."""
    return MGraph.build(
        ["X", "Y", "Z", "W"],
        [("X", "Y"), ("X", "Z"), ("Y", "Z"), ("Y", "W"), ("Z", "W")],
        {"Y": ["Y"], "W": ["Z"]},
    )


def xyzw_pattern() -> Pattern:
    """The graph above with every edge directed except X - Y."""
    g = xyzw_mgraph()
    p = skeleton_of(g)
    for a, b in [("X", "Z"), ("Y", "Z"), ("Y", "W"), ("Z", "W")]:
        p = orient_edge(p, g.index(a), g.index(b))
    return p


_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """``criterion(k, passed, detail)`` prints and records one acceptance line."""
    lines = request.config.stash.setdefault(_CRITERIA, {})

    def record(k: int, passed: bool, detail: str) -> bool:
        line = f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines[k] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
