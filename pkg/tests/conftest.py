import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, n, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    vals = np.geomspace(1.0, cond, n)
    return (q * vals) @ q.T


def linear_gaussian_process(rng, length, a, noise_std=1.0):
    """``x_{t+1} = A x_t + noise``, started from zero."""
    n = a.shape[0]
    x = np.zeros((length, n))
    noise = noise_std * rng.standard_normal((length, n))
    for t in range(1, length):
        x[t] = a @ x[t - 1] + noise[t]
    return x


ACCEPTANCE_LINES = []


def report(number, title, ok, detail):
    """Record and print one acceptance verdict line."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} -- {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
