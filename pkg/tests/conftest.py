import pytest

from asyrk.datagen import GenSpec, gen_near_tight_frame, gen_sparse_gaussian


@pytest.fixture(scope="session")
def small_system():
    """40×30 consistent normalized Gaussian system."""
    return gen_sparse_gaussian(GenSpec(40, 30, 0.2, seed=11))


@pytest.fixture(scope="session")
def wide_system():
    """Rank-deficient 20×40 system (solution set is an affine subspace)."""
    return gen_sparse_gaussian(GenSpec(20, 40, 0.2, seed=5))


@pytest.fixture(scope="session")
def frame_system():
    """100×50 near-tight frame where tau = 5 is corollary-feasible."""
    return gen_near_tight_frame(50, perturb=0.2, seed=0)



_VERDICTS: list[str] = []


@pytest.fixture()
def verdict(capsys):
    """Record one PASS/FAIL line for an acceptance criterion.

    The line is printed immediately and repeated in the terminal summary.
    """
    def record(number: int, passed: bool, detail: str, label: str | None = None):
        tag = label or ("PASS" if passed else "FAIL")
        line = f"criterion {number:>2}: {tag}  {detail}"
        _VERDICTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
