import json

import pytest

from guidefree.lab.cli import EXIT_ERROR, EXIT_FAILED, EXIT_OK, main
from guidefree.lab.test_experiment import tiny_document, write_config


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    monkeypatch.setenv('GUIDEFREE_THREADS', '1')
    monkeypatch.delenv('GUIDEFREE_LOG_LEVEL', raising=False)


def test_verify_writes_reports(tmp_path):
    code = main(['verify', '--suite', 'regularizers', '--problems', '2', '--out', str(tmp_path)])
    assert code == EXIT_OK
    assert json.loads((tmp_path / 'verify.json').read_text())['passed'] is True


def test_verify_zero_tolerance_exits_nonzero(capsys):
    code = main(['verify', '--suite', 'regularizers', '--problems', '2', '--tolerance', '0'])
    assert code == EXIT_FAILED
    document = json.loads(capsys.readouterr().out)
    assert document['suites']['regularizers']['summary']['failed'] == 2


def test_invalid_config_exits_with_field_path(tmp_path, capsys):
    document = tiny_document()
    document['train']['beta_dsm'] = -1.0
    code = main(['train', '--config', str(write_config(tmp_path, document))])
    assert code == EXIT_ERROR
    assert 'train.beta_dsm' in capsys.readouterr().err


def test_unknown_log_level(tmp_path, monkeypatch):
    monkeypatch.setenv('GUIDEFREE_LOG_LEVEL', 'chatty')
    assert main(['verify', '--suite', 'regularizers', '--problems', '1']) == EXIT_ERROR


def test_train_sample_metrics_sweep_plot(tmp_path, capsys):
    config = write_config(tmp_path, tiny_document())
    runs = tmp_path / 'runs'
    assert main(['train', '--config', str(config), '--out', str(runs), '--seed', '5', '--no-progress']) == EXIT_OK
    run = runs / 'base'
    assert json.loads((run / 'config.json').read_text())['seed'] == 5
    checkpoint = run / 'checkpoints' / 'final.ckpt'

    assert main(['sample', '--checkpoint', str(checkpoint), '--class', '0', '--class', '1', '--n', '8',
                 '--gamma', '1', '--shared-noise']) == EXIT_OK
    assert (run / 'samples' / 'class1_gamma1.csv').is_file()
    assert main(['sample', '--checkpoint', str(checkpoint), '--class', '3']) == EXIT_ERROR

    assert main(['metrics', str(run)]) == EXIT_OK
    assert main(['sweep', '--config', str(config), '--checkpoint', str(checkpoint)]) == EXIT_OK
    assert (run / 'reports' / 'gamma_sweep.csv').is_file()

    assert main(['plot', str(run)]) == EXIT_OK
    assert (run / 'plots' / 'tradeoff.svg').is_file()
    assert (run / 'plots' / 'class0_gamma1.svg').is_file()
    assert main(['plot', str(tmp_path / 'nowhere')]) == EXIT_ERROR


def test_missing_or_corrupt_checkpoint_exits_with_error(tmp_path, capsys):
    missing = tmp_path / 'absent.ckpt'
    assert main(['sample', '--checkpoint', str(missing), '--n', '4']) == EXIT_ERROR
    assert 'absent.ckpt' in capsys.readouterr().err
    corrupt = tmp_path / 'corrupt.ckpt'
    corrupt.write_bytes(b'NOTACKPT' + bytes(120))
    config = write_config(tmp_path, tiny_document())
    assert main(['sweep', '--config', str(config), '--checkpoint', str(corrupt), '--out', str(tmp_path)]) == EXIT_ERROR
    assert 'not a checkpoint file' in capsys.readouterr().err


def test_story_reports_and_exits_by_outcome(tmp_path, capsys):
    runs = tmp_path / 'runs'
    assert main(['train', '--config', str(write_config(tmp_path, tiny_document())), '--out', str(runs),
                 '--no-progress']) == EXIT_OK
    document = tiny_document('finetune', objective='mclr', init_checkpoint='runs/base/checkpoints/final.ckpt')
    assert main(['train', '--config', str(write_config(tmp_path, document)), '--out', str(runs),
                 '--no-progress']) == EXIT_OK
    capsys.readouterr()
    code = main(['story', '--base', str(runs / 'base'), '--finetune', str(runs / 'finetune')])
    story = runs / 'finetune' / 'reports' / 'story' / 'story.json'
    assert capsys.readouterr().out.strip() == str(story)
    passed = json.loads(story.read_text())['passed']
    assert code == (EXIT_OK if passed else EXIT_FAILED)
    assert main(['story', '--base', str(runs / 'base'), '--finetune', str(tmp_path / 'nowhere')]) == EXIT_ERROR
