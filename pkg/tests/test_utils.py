import json
import logging

import pytest

from mtorl.utils.errors import ConfigError, DataError, MtorlError, NonFiniteLossError, NumericsError
from mtorl.utils.fs import hash_file, read_json, write_csv, write_json
from mtorl.utils.logging import LOG_LEVEL_ENV, configure_logging, debug_enabled, resolve_level
from mtorl.utils.state import RunMetadata


@pytest.mark.parametrize(
    "name, expected",
    [
        (None, (logging.INFO, True)),
        ("", (logging.INFO, True)),
        ("debug", (logging.DEBUG, True)),
        (" WARNING ", (logging.WARNING, True)),
        ("warn", (logging.WARNING, True)),
        ("error", (logging.ERROR, True)),
        ("verbose", (logging.INFO, False)),
    ],
)
def test_resolve_level(name, expected):
    assert resolve_level(name) == expected


def test_configure_logging_reads_environment(monkeypatch):
    monkeypatch.setenv(LOG_LEVEL_ENV, "debug")
    assert configure_logging() == logging.DEBUG
    assert debug_enabled()
    assert configure_logging("error") == logging.ERROR
    assert not debug_enabled()


def test_configure_logging_replaces_its_handler():
    configure_logging("info")
    configure_logging("info")
    assert len(logging.getLogger("mtorl").handlers) == 1


def test_error_hierarchy():
    assert issubclass(ConfigError, ValueError) and issubclass(ConfigError, MtorlError)
    assert issubclass(DataError, MtorlError)
    err = NonFiniteLossError(1, epoch=3, component="policy")
    assert isinstance(err, NumericsError)
    assert str(err) == "non-finite policy loss at epoch 3, batch 1"


def test_write_json_is_deterministic(tmp_path):
    a = write_json(tmp_path / "a.json", {"b": [1, 2], "a": 0.5})
    b = write_json(tmp_path / "b.json", {"a": 0.5, "b": [1, 2]})
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text(encoding="utf-8").endswith("\n")
    assert read_json(a) == {"a": 0.5, "b": [1, 2]}
    assert hash_file(a) == hash_file(b)


def test_write_json_refuses_nan(tmp_path):
    with pytest.raises(ValueError):
        write_json(tmp_path / "nan.json", {"x": float("nan")})


def test_write_csv_keeps_column_order(tmp_path):
    path = write_csv(tmp_path / "rows.csv", ["b", "a"], [{"a": 1, "b": 2, "c": 3}])
    assert path.read_text(encoding="utf-8") == "b,a\n2,1\n"


def test_run_metadata_records_outputs(tmp_path):
    output = write_json(tmp_path / "report.json", {"ok": True})
    meta = RunMetadata(tmp_path, "train")
    meta.update_config("abc", 7)
    meta.record_outputs([output, tmp_path / "never-written.json"])
    meta.update_metadata(epochs_run=3)
    meta.finish()

    saved = json.loads((tmp_path / "run_meta.json").read_text(encoding="utf-8"))
    assert saved["command"] == "train"
    assert saved["seed"] == 7 and saved["config_hash"] == "abc"
    assert saved["outputs"] == {"report.json": hash_file(output)}
    assert saved["metadata"] == {"epochs_run": 3}
    assert saved["finished_at"] is not None
