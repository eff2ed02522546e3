import numpy as np
import pytest

from bergscale.domains import DefiningFunction
from bergscale.wpoly import HermitianPolynomial, Multiweight, parse_polynomial

ELLIPSOID_P = "z1^2*zb1^2 + z2^3*zb2^3"
KN_P = "z1^4*zb1^4 + 15/14*z1^7*zb1 + 15/14*z1*zb1^7"
UNBALANCED_P = "z1^4*zb1^4 - 1/2*z1^7*zb1 - 1/2*z1*zb1^7"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ellipsoid_rho():
    return DefiningFunction.from_model(parse_polynomial(ELLIPSOID_P, n=2), Multiweight([2, 3]))


@pytest.fixture
def kn_rho():
    return DefiningFunction.from_model(parse_polynomial(KN_P, n=1), Multiweight([4]))


@pytest.fixture
def unbalanced_rho():
    return DefiningFunction.from_model(parse_polynomial(UNBALANCED_P, n=1), Multiweight([4]))


def ellipsoid_point(j):
    return np.array([j ** -0.25, j ** (-1 / 6), -2 / j - 1 / j ** 2], dtype=complex)


def kn_point(j):
    return np.array([j ** -0.125, -22 / (7 * j) - 1 / j ** 2], dtype=complex)


def unbalanced_point(j):
    return np.array([j ** -0.125, -1 / j ** 2], dtype=complex)


def random_points(rng, count, n, scale=1.0):
    return scale * (rng.normal(size=(count, n)) + 1j * rng.normal(size=(count, n)))


H = HermitianPolynomial


ACCEPTANCE: dict = {}


def record_acceptance(ac: str, part: str, ok: bool, detail: str) -> None:
    """Collect one acceptance check; a criterion passes only if all its parts pass."""
    ACCEPTANCE.setdefault(ac, []).append((part, bool(ok), detail))
    print(f"{'PASS' if ok else 'FAIL'} {ac} {part}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for ac in sorted(ACCEPTANCE, key=lambda a: int(a[2:])):
        parts = ACCEPTANCE[ac]
        ok = all(p[1] for p in parts)
        failed = [f"{name} ({detail})" for name, good, detail in parts if not good]
        line = f"{'PASS' if ok else 'FAIL'} {ac}"
        line += ": " + ("; ".join(failed) if failed else f"{len(parts)} checks")
        terminalreporter.write_line(line)
