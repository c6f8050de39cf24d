import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gddlink.datasets import video_patterns, video_platform_graph, video_rules  # noqa: E402


@pytest.fixture
def toy():
    return video_platform_graph()


@pytest.fixture
def patterns():
    return video_patterns()


@pytest.fixture
def rules():
    return video_rules()



def pytest_terminal_summary(terminalreporter):
    import criteria

    if not criteria.COLLECTED:
        return
    terminalreporter.section("acceptance criteria")
    for line in criteria.summary_lines():
        terminalreporter.write_line(line)
