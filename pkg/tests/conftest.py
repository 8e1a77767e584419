import time

import pytest

ACCEPTANCE_LINES = []


def record(number: int, title: str, ok: bool, detail: str):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


class Timed:
    def __init__(self, value, seconds):
        self.value = value
        self.seconds = seconds


def timed(fn, *args, **kwargs) -> Timed:
    start = time.perf_counter()
    value = fn(*args, **kwargs)
    return Timed(value, time.perf_counter() - start)


@pytest.fixture(scope="session")
def exp1_full():
    from gasshift.exphouse import run_experiment1

    return timed(run_experiment1, seed=0)


@pytest.fixture(scope="session")
def exp2_full():
    from gasshift.exphouse import run_experiment2

    return timed(run_experiment2, seed=0)
