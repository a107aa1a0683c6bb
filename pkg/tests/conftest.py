import numpy as np
import pytest

from mimic_sem.model import Dataset, ModelSpec, ParameterSet


def random_params(rng, p, k, fixed=0):
    lam = rng.uniform(0.5, 1.5, p) * rng.choice([-1.0, 1.0], p)
    lam[fixed] = 1.0
    return ParameterSet(
        lam=lam,
        beta=rng.normal(0.0, 0.5, k),
        theta=rng.uniform(0.4, 1.2, p),
        sigma=rng.uniform(0.3, 1.2),
    )


def random_dataset(rng, n, p, k):
    return Dataset(unit_labels=(), Y=rng.normal(size=(n, p)), X=rng.normal(size=(n, k)))


def random_instance(rng, n, p, k):
    return random_dataset(rng, n, p, k), ModelSpec(p, k), random_params(rng, p, k)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


DATA_DIR = __import__("pathlib").Path(__import__("mimic_sem").__file__).parent / "data"


def load_published_ranking():
    """Published ranking fixture: unit -> (index_1, rank_1, index_2, rank_2)."""
    import csv

    with open(DATA_DIR / "published_ranking.csv", newline="", encoding="utf-8") as fh:
        return {
            r["unit"]: (float(r["index_1"]), int(r["rank_1"]), float(r["index_2"]), int(r["rank_2"]))
            for r in csv.DictReader(fh)
        }


ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
