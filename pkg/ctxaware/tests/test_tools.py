"""
Tests for the command-line tools: exit codes and printed output.
"""

import json

import pytest

from tools import analyze_log, device_cli, run_scenario

DEVICES = [
    {"alias": "john", "id": "02:00:00:00:00:01", "position": [38.7410, -9.1386]},
    {"alias": "alice", "id": "02:00:00:00:00:02", "position": [38.7369, -9.1386]},
]
UNMET = {
    "name": "unmet",
    "start": "2013-07-26T14:00:00",
    "devices": DEVICES,
    "steps": [
        {
            "action": "user",
            "device": "john",
            "at": "+00:00:10",
            "op": "add_contact",
            "args": {"contact_id": 1, "name": "Alice", "device": "alice"},
        },
        {
            "action": "expect_notification",
            "device": "john",
            "kind": "person_nearby",
            "at": "+00:01:00",
        },
    ],
}
SAIU_TEXT = (
    "Saiu desconhecido - 34:C8:03:F6:F3:A8\tTime: 25/07/2013 11:02:57.000"
    "\tCoord: 38.738522;-9.1543572\n"
)
ENTROU_TEXT = (
    "Entrou desconhecido - 34:C8:03:F6:F3:A8\tTime: 25/07/2013 11:00:00.000"
    "\tCoord: 38.738522;-9.1543572\n"
)


@pytest.fixture
def no_config(tmp_path):
    return ["--config", str(tmp_path / "absent.toml")]


class TestRunTool:
    """Test ctx-run."""

    def test_list(self, capsys):
        assert run_scenario.main(["--list"]) == 0
        assert "milk_reminder" in capsys.readouterr().out

    def test_nothing_to_run(self, no_config):
        """No scenario is a usage error."""
        assert run_scenario.main(no_config) == 2

    def test_missing_file(self, tmp_path, no_config):
        assert run_scenario.main([str(tmp_path / "none.json"), *no_config]) == 2

    def test_malformed_script(self, tmp_path, no_config):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert run_scenario.main([str(path), *no_config]) == 2

    @pytest.mark.scenario
    def test_passing_example(self, tmp_path, no_config):
        """A shipped example passes and leaves a trace."""
        code = run_scenario.main(["milk_reminder", "--trace", str(tmp_path), *no_config])
        assert code == 0
        assert list(tmp_path.rglob("report.json"))

    def test_failed_expectation(self, tmp_path, capsys, no_config):
        """An unmet expectation exits 1 and names the step."""
        path = tmp_path / "unmet.json"
        path.write_text(json.dumps(UNMET))
        code = run_scenario.main([str(path), "--trace", str(tmp_path / "trace"), *no_config])
        assert code == 1
        assert "failed" in capsys.readouterr().err


class TestAnalyzeTool:
    """Test ctx-analyze."""

    def test_missing_file(self, tmp_path, no_config):
        assert analyze_log.main([str(tmp_path / "none.log"), *no_config]) == 2

    def test_no_input(self, no_config):
        assert analyze_log.main(no_config) == 2

    def test_malformed_line_strict(self, tmp_path, no_config):
        """Without --lenient the first bad line fails the run."""
        path = tmp_path / "d.log"
        path.write_text(ENTROU_TEXT + "garbage\n" + SAIU_TEXT, encoding="utf-8")
        assert analyze_log.main([str(path), *no_config]) == 1

    def test_malformed_line_lenient(self, tmp_path, capsys, no_config):
        """With --lenient the bad line is skipped and the rest is counted."""
        path = tmp_path / "d.log"
        path.write_text(ENTROU_TEXT + "garbage\n" + SAIU_TEXT, encoding="utf-8")
        assert analyze_log.main([str(path), "--lenient", "--json", *no_config]) == 0
        captured = capsys.readouterr()
        stats = json.loads(captured.out.strip().splitlines()[-1])
        assert stats["distinct_devices"] == 1
        assert stats["session_count"] == 1
        assert "line 2" in captured.err

    def test_demo_json(self, capsys, no_config):
        assert analyze_log.main(["--demo", "12", "--json", *no_config]) == 0
        stats = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert stats["distinct_devices"] == 12


class TestDeviceTool:
    """Test ctx-device."""

    def test_missing_data_dir(self, tmp_path, no_config):
        assert device_cli.main(["--data-dir", str(tmp_path / "none"), *no_config, "near"]) == 2

    def test_uninitialised_store(self, tmp_path, no_config):
        """An existing but empty data directory needs init first."""
        assert device_cli.main(["--data-dir", str(tmp_path), *no_config, "near"]) == 2

    def test_contact_scan_near(self, tmp_path, capsys, no_config):
        """Init, add a contact, see it in a scan and list it as near."""
        base = ["--data-dir", str(tmp_path / "phone"), *no_config]
        assert device_cli.main([*base, "init", "02:00:00:00:00:01"]) == 0
        assert device_cli.main([*base, "add-contact", "1", "Alice", "02:00:00:00:00:02"]) == 0
        capsys.readouterr()
        scan = ["scan", "--see", "02:00:00:00:00:02", "--at", "2013-07-26T14:00:00"]
        assert device_cli.main([*base, *scan]) == 0
        assert "person_nearby" in capsys.readouterr().out
        assert device_cli.main([*base, "near"]) == 0
        assert "02:00:00:00:00:02\tknown\t1\t" in capsys.readouterr().out

    def test_operation_error(self, tmp_path, no_config):
        """A refused operation exits 1."""
        base = ["--data-dir", str(tmp_path / "phone"), *no_config]
        assert device_cli.main([*base, "init", "02:00:00:00:00:01"]) == 0
        code = device_cli.main([*base, "create-note", "--text", "x", "--person", "9"])
        assert code == 1

    def test_bad_toggle_is_usage_error(self, tmp_path, no_config):
        base = ["--data-dir", str(tmp_path / "phone"), *no_config]
        assert device_cli.main([*base, "init", "02:00:00:00:00:01"]) == 0
        assert device_cli.main([*base, "silence", "maybe"]) == 2
