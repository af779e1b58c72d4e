import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    """The 20-image synthetic corpus, written once per session."""
    from geoforge.fixtures import make_fixture, write_fixture_config

    root = tmp_path_factory.mktemp("fixture")
    images = make_fixture(root)
    write_fixture_config(root)
    return root, images


_criteria: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    name = props["criterion"]
    if report.when == "call" or report.failed:
        status = "PASS" if report.passed else "FAIL"
        if name not in _criteria or status == "FAIL":
            _criteria[name] = (status, str(props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria, key=lambda s: int(s.split()[0][2:])):
        status, detail = _criteria[name]
        terminalreporter.write_line(f"{status}  {name}" + (f"  ({detail})" if detail else ""))
