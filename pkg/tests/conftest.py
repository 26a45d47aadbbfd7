import numpy as np
import pytest

from statdistort.core import Dataset, TimeSeries

NAMES = ("attr1", "attr2", "attr3")
nan = float("nan")


def make_ds(*blocks, names=NAMES, role="dirty"):
    """One series per block of rows; nodes (0, 0, s), times 0..T-1."""
    series = []
    for s, rows in enumerate(blocks):
        x = np.asarray(rows, dtype=float).reshape(len(rows), -1)
        series.append(TimeSeries((0, 0, s), np.arange(len(x)), x))
    return Dataset.from_series(series, names[: series[0].values.shape[1]], role=role, max_length=None)


@pytest.fixture(scope="session")
def reference():
    from statdistort.synth import reference_dataset

    return reference_dataset()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
