import numpy as np
import pytest

from specshift.spectral_core import SpectralData


@pytest.fixture
def two_point():
    # s = [1, 1/2], a = b = 1: the finite section is [[2, 1], [1, 3/2]]
    return SpectralData(t=[1, 2], nu=[1, 1], a=[1, 1], b=[1, 1], name="two-point")


@pytest.fixture
def mom1_data():
    # moment 1 = 2a + 4a = -1 with a = -1/6, moment 2 = -10/3
    return SpectralData(t=[2, 4], nu=[1, 1], a=[-1 / 6, -1 / 6], b=[1, 1], name="mom1")


def random_data(family: str, seed: int, N: int = 50) -> SpectralData:
    rng = np.random.default_rng(seed)
    t = 2.0 ** np.arange(1, N + 1) if family == "lacunary" else np.arange(1, N + 1.0)
    a = rng.normal(size=N) + 1j * rng.normal(size=N)
    b = rng.normal(size=N) + 1j * rng.normal(size=N)
    nu = rng.uniform(0.5, 1.5, size=N) / N
    return SpectralData(t=t, nu=nu, a=a, b=b, name=f"{family}-{seed}")


# acceptance results, printed once at the end of the run
ACCEPTANCE = {}


def record(criterion, ok: bool, detail: str = "", status: str | None = None):
    ACCEPTANCE[str(criterion)] = (status or ("PASS" if ok else "FAIL"), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")

    def key(k):
        head = k.split()[0]
        return (int(head), k)

    for k in sorted(ACCEPTANCE, key=key):
        status, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {status}  {detail}".rstrip())
