"""Tests for the command-line launcher and the formatting helpers it relies on."""

import json

import pytest

import config
import utils
from launcher import EXIT_INVALID_INPUT, EXIT_OK, main
from test_runner import tiny_scenario_document, write_scenario


def test_validate_command(tmp_path, capsys):
    path = write_scenario(tmp_path, tiny_scenario_document())
    assert main(['validate', '--scenario', str(path)]) == EXIT_OK
    assert "tiny is valid" in capsys.readouterr().out


def test_run_command_writes_results(tmp_path):
    path = write_scenario(tmp_path, tiny_scenario_document())
    out = tmp_path / "run"
    code = main(['--quiet', 'run', '--scenario', str(path), '--out', str(out), '--penalty-res', '5'])
    assert code == EXIT_OK
    for name in (config.SUMMARY_FILE, config.COSTS_FILE, config.VOLTAGES_FILE, config.LOSSES_FILE,
                 config.SCHEDULES_FILE, config.CRITICALITY_FILE):
        assert (out / name).exists()
    summary = json.loads((out / config.SUMMARY_FILE).read_text())
    assert summary['provenance']['options']['penalty_residential'] == 5.0


def test_sweep_command(tmp_path):
    path = write_scenario(tmp_path, tiny_scenario_document())
    out = tmp_path / "sweep"
    code = main(['--quiet', 'sweep', '--scenario', str(path), '--axis', 'participation_pct',
                 '--values', '0,100', '--out', str(out)])
    assert code == EXIT_OK
    assert (out / config.SWEEP_FILE).exists()
    assert (out / "participation_pct=0" / config.SUMMARY_FILE).exists()
    assert (out / "participation_pct=100" / config.SUMMARY_FILE).exists()


def test_invalid_scenario_exits_with_json_error(tmp_path, capsys):
    document = tiny_scenario_document()
    document['customers'][0]['appliances'][0]['window'] = [3, 2]
    path = write_scenario(tmp_path, document)

    assert main(['validate', '--scenario', str(path)]) == EXIT_INVALID_INPUT
    payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert payload['error'] == 'ValidationError'
    assert payload['entity'] == 'washer'
    assert payload['field'].endswith('window_end')
    assert payload['line'] >= 1


def test_malformed_json_exits_with_line(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "name": \n}\n')
    assert main(['validate', '--scenario', str(path)]) == EXIT_INVALID_INPUT
    payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert payload['error'] == 'ScenarioFileError'
    assert payload['line'] == 3


def test_bad_option_value_exits_invalid(tmp_path, capsys):
    path = write_scenario(tmp_path, tiny_scenario_document())
    code = main(['--quiet', 'run', '--scenario', str(path), '--out', str(tmp_path / "x"),
                 '--participation', '140'])
    assert code == EXIT_INVALID_INPUT
    assert json.loads(capsys.readouterr().err.strip())['field'] == 'options.participation_pct'


def test_empty_sweep_values_exit_invalid(tmp_path, capsys):
    path = write_scenario(tmp_path, tiny_scenario_document())
    code = main(['--quiet', 'sweep', '--scenario', str(path), '--axis', 'pv_scale', '--values', ' , ',
                 '--out', str(tmp_path / "x")])
    assert code == EXIT_INVALID_INPUT
    assert json.loads(capsys.readouterr().err.strip())['field'] == 'values'


def test_unknown_axis_exits_with_json_error(tmp_path, capsys):
    path = write_scenario(tmp_path, tiny_scenario_document())
    code = main(['--quiet', 'sweep', '--scenario', str(path), '--axis', 'colour', '--values', '1',
                 '--out', str(tmp_path / "x")])
    assert code == EXIT_INVALID_INPUT
    payload = json.loads(capsys.readouterr().err.strip())
    assert payload['error'] == 'ValidationError'
    assert payload['field'] == 'axis'
    assert not (tmp_path / "x").exists()


def test_missing_flag_exits_with_json_error(capsys):
    assert main(['run']) == EXIT_INVALID_INPUT
    payload = json.loads(capsys.readouterr().err.strip())
    assert payload['error'] == 'UsageError'
    assert '--out' in payload['message']

    assert main(['--log-level', 'LOUD', 'validate']) == EXIT_INVALID_INPUT
    assert json.loads(capsys.readouterr().err.strip())['error'] == 'UsageError'


def test_compare_no_pv_flag(tmp_path):
    path = write_scenario(tmp_path, tiny_scenario_document())
    out = tmp_path / "run"
    assert main(['--quiet', 'run', '--scenario', str(path), '--out', str(out), '--compare-no-pv']) == EXIT_OK
    summary = json.loads((out / config.SUMMARY_FILE).read_text())
    assert summary['provenance']['options']['compare_no_pv'] is True
    assert summary['no_pv_daily_loss_kwh'] > 0
    assert summary['loss_reduction_vs_no_pv_pct'] is not None

    sweep_out = tmp_path / "sweep"
    assert main(['--quiet', 'sweep', '--scenario', str(path), '--axis', 'pv_scale', '--values', '0.5,1',
                 '--out', str(sweep_out), '--compare-no-pv']) == EXIT_OK
    header = (sweep_out / config.SWEEP_FILE).read_text().splitlines()[0].split(",")
    assert 'loss_reduction_vs_no_pv_pct' in header


def test_formatting_helpers():
    assert utils.fmt_sig(0.1 + 0.2) == "0.3"
    assert utils.fmt_sig(123456789.0) == "1.23457e+08"
    assert utils.fmt_sig(None) == "NA"
    assert utils.fmt_sig(float('nan')) == "NA"
    assert utils.round_nested({'a': [1.23456789, None], 'b': float('nan')}) == {'a': [1.23457, None], 'b': None}
    assert utils.parse_value_list("0, 5,10 ,20") == [0.0, 5.0, 10.0, 20.0]
    assert utils.format_slots((3, 4, 9)) == "3 4 9"
    assert utils.parse_slots("3 4 9") == (3, 4, 9)
    assert utils.parse_slots("") == ()
    assert utils.format_percentage(None) == "n/a"


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
