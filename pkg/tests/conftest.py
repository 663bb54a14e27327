import pytest

from acceptance_registry import RESULTS
from tlrelevance import kernels


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run the test once per available kernel backend, restoring the default after."""
    previous = kernels.BACKEND
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, passed, detail in RESULTS:
        tr.write_line(f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else ""))
    n_pass = sum(p for _, p, _ in RESULTS)
    tr.write_line(f"{n_pass}/{len(RESULTS)} acceptance criteria passed (default kernels: {kernels.BACKEND})")
