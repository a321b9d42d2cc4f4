import pytest
from hypothesis import HealthCheck, settings

from strew.judge import oracle_judge
from strew.types import GroundTruth, TaskInstance, TaskKind, TemporalInterval, VideoRef

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def judge():
    return oracle_judge()


@pytest.fixture
def grounding_task():
    video = VideoRef("file://v.mp4", 30.0)
    return TaskInstance("g1", video, "When does the door open?", TaskKind.GROUNDING, GroundTruth(interval=TemporalInterval(4.0, 8.0)))


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance_log(request):
    return request.config.stash[_ACCEPTANCE_KEY]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
