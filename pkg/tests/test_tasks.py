"""
Tests for the development task runner.
"""

import pytest

from contrail import tasks as task_runner


@pytest.fixture
def fake_run(mocker):
    return mocker.patch(
        "contrail.tasks.subprocess.run", return_value=mocker.Mock(returncode=0)
    )


@pytest.mark.unit
class TestTaskRunner:
    """Command dispatch without spawning real processes."""

    def test_default_suite_skips_slow(self, fake_run):
        assert task_runner.run_test() == 0
        cmd = fake_run.call_args.args[0]
        assert cmd[:3] == ["uv", "run", "pytest"]
        assert cmd[-2:] == ["-m", "not slow"]

    def test_slow_suite(self, fake_run):
        task_runner.run_test_slow()
        assert fake_run.call_args.args[0][-2:] == ["-m", "slow"]

    def test_coverage_targets_package(self, fake_run):
        task_runner.run_test_coverage()
        assert "--cov=contrail" in fake_run.call_args.args[0]

    def test_exit_code_propagates(self, fake_run):
        fake_run.return_value.returncode = 5
        assert task_runner.run_test_unit() == 5

    def test_lint_returns_worst_code(self, fake_run, mocker):
        fake_run.side_effect = [mocker.Mock(returncode=0), mocker.Mock(returncode=1)]
        assert task_runner.run_lint() == 1
        assert fake_run.call_count == 2

    def test_main_dispatches_dashed_names(self, fake_run):
        assert task_runner.main(["test-property"]) == 0
        assert fake_run.call_args.args[0][-2:] == ["-m", "property"]

    def test_main_unknown_command(self, fake_run, capsys):
        assert task_runner.main(["deploy"]) == 1
        assert "Unknown command" in capsys.readouterr().out
        fake_run.assert_not_called()

    def test_main_without_arguments_prints_help(self, capsys):
        assert task_runner.main([]) == 1
        assert "Available commands" in capsys.readouterr().out

    def test_clean(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        for name in (".pytest_cache", "results", ".hypothesis", "pkg/__pycache__"):
            (tmp_path / name).mkdir(parents=True)
        (tmp_path / ".coverage").write_text("")
        assert task_runner.run_clean() == 0
        assert sorted(p.name for p in tmp_path.iterdir()) == ["pkg"]
        assert not (tmp_path / "pkg" / "__pycache__").exists()
