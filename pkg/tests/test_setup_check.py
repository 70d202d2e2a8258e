# HeraldComb: runs in a standard CPython 3.9+ environment.
import setup_check


def test_requirements_are_read_without_specifiers(tmp_path):
    path = tmp_path / "requirements.txt"
    path.write_text("numpy>=1.22\n# comment\n\nscipy==1.11  # pinned\nhypothesis[numpy]~=6.60\n", encoding="utf-8")
    assert setup_check.read_requirements(str(path)) == ["numpy", "scipy", "hypothesis"]


def test_repository_requirements_cover_the_numeric_stack():
    packages = setup_check.read_requirements()
    assert {"numpy", "scipy", "numba", "pytest", "hypothesis"} <= set(packages)


def test_python_version_gate(capsys):
    assert setup_check.check_python_version((3, 9, 0))
    assert not setup_check.check_python_version((3, 8, 10))
    assert "requires 3.9+" in capsys.readouterr().out


def test_missing_packages_are_listed():
    assert setup_check.missing_packages(["numpy", "definitely_missing_pkg"]) == ["definitely_missing_pkg"]


def test_main_reports_a_complete_environment(monkeypatch):
    monkeypatch.setattr(setup_check, "missing_packages", lambda packages=None: [])
    assert setup_check.main([]) is True
    monkeypatch.setattr(setup_check, "missing_packages", lambda packages=None: ["numba"])
    assert setup_check.main([]) is False
