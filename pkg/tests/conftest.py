import pytest

from domain_inference import taskgen as tg
from domain_inference.estimator import train_estimator

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def world():
    return tg.universe()


@pytest.fixture(scope="session")
def dataset():
    return tg.make_dataset(seed=0)


@pytest.fixture(scope="session")
def estimator(world, dataset):
    return train_estimator(dataset, world.predicates, tg.PREDICATE_NAMES, tg.ACTION_NAMES, seed=0)


@pytest.fixture(scope="session")
def suites():
    return tg.make_test_suite(seed=0)


@pytest.fixture(scope="session")
def demos():
    return {s.name: tg.make_demo(s, 0) for s in tg.all_specs()}


@pytest.fixture(scope="session")
def validation_sets():
    return {s.name: list(tg.make_validation_set(s, 5, 0)) for s in tg.all_specs()}


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool, detail: str = "") -> None:
        _CRITERIA[number] = (passed, detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, detail = _CRITERIA[number]
        terminalreporter.write_line(
            f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
