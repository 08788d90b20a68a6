import numpy as np
import pytest
from hypothesis import settings

from leglab.contact import LegendrianCurve
from leglab.laurent import LaurentPoly, OneForm, differentiate, evaluate, mul, primitive, residue_at

settings.register_profile("leglab", max_examples=40, deadline=None)
settings.load_profile("leglab")


def random_laurent(rng, centers=(), deg=4, pole_deg=2, scale=1.0):
    poly = {k: scale * complex(rng.normal(), rng.normal()) for k in range(deg + 1)}
    poles = {(i, -k): scale * complex(rng.normal(), rng.normal())
             for i in range(len(centers)) for k in range(1, pole_deg + 1)}
    return LaurentPoly(centers, poly, poles)


def random_legendrian(rng, n=1, deg=3, centers=(), pole_deg=2):
    """Random exact Legendrian curve: y_i polynomial, x_i Laurent with the
    residues of x_i dy_i cancelled by multiples of 1/(q - c)."""
    xs, ys = [], []
    for _ in range(n):
        y = random_laurent(rng, centers, deg, 0)
        x = random_laurent(rng, centers, deg, pole_deg)
        dy = differentiate(y)
        for i, c in enumerate(centers):
            r = residue_at(OneForm(mul(x, dy)), i)
            x = x - LaurentPoly(centers, None, {(i, -1): r / complex(evaluate(dy, c))})
        xs.append(x)
        ys.append(y)
    form = OneForm.product(xs[0], ys[0])
    for a, b in zip(xs[1:], ys[1:]):
        form = form + OneForm.product(a, b)
    z = -primitive(form) + complex(rng.normal(), rng.normal())
    z = z.with_centers(centers) if centers else z
    return LegendrianCurve(xs, ys, z)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance summary: one pass/fail line per criterion ----------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion a test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    num, title = mark.args
    entry = _CRITERIA.setdefault(num, {"title": title, "ok": True, "tests": 0})
    if rep.when == "call":
        entry["tests"] += 1
    if rep.failed:
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        e = _CRITERIA[num]
        verdict = "PASS" if e["ok"] and e["tests"] else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d}  {verdict}  {e['title']} ({e['tests']} tests)")
