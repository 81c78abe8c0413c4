"""
Tests for cli module.

Tests argument parsing, overrides, dispatch and the mapping of failures to
exit codes.
"""
import json

import pytest

from cli import EXIT_FAILURE, EXIT_INVALID, EXIT_IO, _overrides, build_parser, cli
from errors import SolverError


def test_cli_run_succeeds_on_chain(make_config, chain_document, capsys):
    """Test a full run through the command line."""
    path = make_config(chain_document)

    code = cli(["run", str(path)])

    captured = capsys.readouterr()
    assert code == 0
    assert "pi" in captured.out
    assert (path.parent / "results" / "summary.json").exists()


def test_cli_flags_override_the_document(make_config, chain_document, tmp_path):
    """Test --seeds, --backend, --out and --set reaching the configuration."""
    path = make_config(chain_document)
    out = tmp_path / "elsewhere"

    code = cli(["run", str(path), "--seeds", "2", "3", "--backend", "dp", "--out", str(out), "--set", "max_iters=50"])

    summary = json.loads((out / "summary.json").read_text())
    assert code == 0
    assert summary["backend"] == "dp"
    assert [r["seed"] for r in summary["runs"]] == [2, 3]


def test_overrides_put_dedicated_flags_last(tmp_path):
    """Test that --seeds/--backend/--out win over --set."""
    args = build_parser().parse_args(
        ["sweep", "c.json", "--set", "backend=tree", "--backend", "dp", "--seeds", "1", "--out", "o"]
    )
    assert _overrides(args) == ["backend=tree", "seeds=[1]", "backend=dp", 'out="o"']


def test_cli_missing_config_is_an_io_failure(tmp_path, capsys):
    """Test exit code 4 for a file that does not exist."""
    code = cli(["solve", str(tmp_path / "absent.json")])

    captured = capsys.readouterr()
    assert code == EXIT_IO
    assert "I/O failure" in captured.out


def test_cli_invalid_config_exits_with_two(make_config, capsys):
    """Test exit code 2 and the error panel for an invalid document."""
    path = make_config({"environment": {"kind": "chain", "n": 0}, "planner": {"kind": "pi"}})

    code = cli(["run", str(path)])

    captured = capsys.readouterr()
    assert code == EXIT_INVALID
    assert "Error" in captured.out
    assert "'n' must be an integer" in captured.out


def test_cli_bad_override_exits_with_two(make_config, chain_document):
    """Test that a malformed --set item is a configuration error."""
    path = make_config(chain_document)
    assert cli(["run", str(path), "--set", "no-equals-sign"]) == EXIT_INVALID


def test_cli_numerical_failure_exits_with_one(make_config, chain_document, mocker, capsys):
    """Test that solver failures map to exit code 1."""
    path = make_config(chain_document)
    mocker.patch("cli.cmd_solve", side_effect=SolverError("singular", {"num_states": 7}))

    code = cli(["solve", str(path)])

    captured = capsys.readouterr()
    assert code == EXIT_FAILURE
    assert "Numerical failure" in captured.out


def test_cli_passes_non_convergence_through(make_config, chain_document, mocker):
    """Test that the command's own exit code is returned."""
    path = make_config(chain_document)
    sweep = mocker.patch("cli.cmd_sweep", return_value=3)

    assert cli(["sweep", str(path)]) == 3
    sweep.assert_called_once()


def test_cli_render_dispatches_inputs(mocker, tmp_path):
    """Test that render skips config loading and forwards paths."""
    render = mocker.patch("cli.cmd_render", return_value=0)

    code = cli(["render", "a.csv", "b.csv", "--out", str(tmp_path / "c.svg")])

    assert code == 0
    inputs, out = render.call_args.args
    assert [p.name for p in inputs] == ["a.csv", "b.csv"]
    assert out == tmp_path / "c.svg"


def test_cli_render_missing_input_is_an_io_failure(tmp_path):
    """Test exit code 4 when a CSV does not exist."""
    assert cli(["render", str(tmp_path / "absent.csv")]) == EXIT_IO


def test_cli_requires_a_subcommand():
    """Test that argparse rejects a bare invocation."""
    with pytest.raises(SystemExit) as excinfo:
        cli([])
    assert excinfo.value.code == 2
