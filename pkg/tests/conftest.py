import pytest

from desk_corpus import write_corpus


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Twenty 128 px natural covers on disk."""
    d = tmp_path_factory.mktemp("covers")
    names = write_corpus(d, 20, size=128, stride=128)
    if len(names) < 20:
        pytest.skip("sample images unavailable")
    return d
