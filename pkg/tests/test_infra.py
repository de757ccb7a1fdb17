import json
import logging
import math

import pytest
import torch

from lcvn.config import config_hash, load_run_config, save_run_config
from lcvn.errors import BudgetError, CheckpointError, ConfigError, NotFoundError, StorageError, TrainingError
from lcvn.infra.checkpoint import load_checkpoint, save_checkpoint, state_checksum
from lcvn.infra.optim import check_finite, make_optimizer
from lcvn.infra.storage import LocalArtifactStore
from lcvn.monitoring.logging import JSONFormatter, add_structured_context, configure_logging, log_exceptions
from lcvn.monitoring.metrics import MetricsLog, Stopwatch

# File: tests/test_infra.py


def test_config_defaults_and_overrides(tmp_path):
    cfg = load_run_config(None, ["wm.context_size=2", "seed=7"])
    assert cfg.wm.context_size == 2 and cfg.seed == 7
    path = tmp_path / "run.yaml"
    save_run_config(cfg, path)
    again = load_run_config(str(path))
    assert config_hash(again) == config_hash(cfg)
    assert config_hash(load_run_config(str(path), ["seed=8"])) != config_hash(cfg)


@pytest.mark.parametrize(
    "override",
    ["wm.sampler_steps=0", "wm.space=voxel", "ac.gamma=1.5", "uni.mode=mixed", "wm.style=poetic", "eval.families=[oracle]", "wm.unknown_key=1"],
)
def test_config_rejects_invalid_values(override):
    with pytest.raises(ConfigError):
        load_run_config(None, [override])


def test_config_budget_overflow():
    with pytest.raises(BudgetError):
        load_run_config(None, ["uni.budget=32"])


def test_storage_round_trip(tmp_path):
    store = LocalArtifactStore(tmp_path / "run")
    store.put_bytes("eval/report.json", b"{}")
    store.put_bytes("checkpoints/wm.ckpt", b"weights")
    assert store.exists("eval/report.json")
    assert list(store.list_keys("eval")) == ["eval/report.json"]
    assert len(store.sha256("checkpoints/wm.ckpt")) == 64
    store.delete("eval/report.json")
    with pytest.raises(NotFoundError):
        store.get_bytes("eval/report.json")
    with pytest.raises(NotFoundError):
        store.delete("eval/report.json")
    with pytest.raises(StorageError):
        store.put_bytes("../outside.txt", b"x")


def test_checkpoint_round_trip_and_kind(tmp_path):
    model = torch.nn.Linear(3, 2)
    path = tmp_path / "wm.ckpt"
    save_checkpoint(path, "wm", {"wm": model.state_dict()}, config={"seed": 0}, extra={"step": 4})
    payload = load_checkpoint(path, expected_kind="wm")
    assert payload["extra"]["step"] == 4
    assert state_checksum(payload["states"]["wm"]) == state_checksum(model)
    with pytest.raises(CheckpointError):
        load_checkpoint(path, expected_kind="ac")


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    torch.save({"weights": 1}, tmp_path / "plain.ckpt")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "plain.ckpt")


def test_metrics_log_truncate(tmp_path):
    curve = MetricsLog(tmp_path / "curves" / "wm.jsonl")
    for step in range(1, 5):
        curve.append(step, {"loss": 1.0 / step})
    curve.truncate(2)
    assert [r["step"] for r in curve.records()] == [1, 2]
    assert MetricsLog(tmp_path / "missing.jsonl").records() == []


def test_stopwatch_accumulates():
    sw = Stopwatch()
    for _ in range(2):
        with sw:
            pass
    assert sw.total >= 0.0
    assert sw.count == 2
    with pytest.raises(RuntimeError):
        Stopwatch().__exit__(None, None, None)


def test_check_finite_reports_terms():
    check_finite({"loss": torch.tensor(1.0)}, phase="wm")
    with pytest.raises(TrainingError) as info:
        check_finite({"loss": torch.tensor(math.nan), "kl": torch.tensor(0.5)}, phase="vae", step=3)
    assert "kl=0.5" in str(info.value)
    assert info.value.diagnostics["step"] == 3


def test_warmup_schedule():
    param = torch.nn.Parameter(torch.zeros(1))
    optimizer, scheduler = make_optimizer([param], lr=1.0, warmup_steps=4)
    lrs = []
    for _ in range(5):
        lrs.append(optimizer.param_groups[0]["lr"])
        optimizer.step()
        scheduler.step()
    assert lrs == pytest.approx([0.25, 0.5, 0.75, 1.0, 1.0])


def test_json_formatter_includes_context():
    record = logging.LogRecord("lcvn.test", logging.INFO, __file__, 1, "step done", (), None)
    record.run_id = "tiny"
    record.loss = 0.5
    payload = json.loads(JSONFormatter().format(record))
    assert payload["message"] == "step done"
    assert payload["extra"] == {"run_id": "tiny", "loss": 0.5}


def test_structured_adapter_binds_context(caplog):
    log = add_structured_context(logging.getLogger("lcvn.test"), run_id="tiny").bind(phase="wm")
    with caplog.at_level(logging.INFO, logger="lcvn.test"):
        log.info("training step", extra={"step": 3})
    record = caplog.records[-1]
    assert (record.run_id, record.phase, record.step) == ("tiny", "wm", 3)


def test_log_exceptions_reraises(tmp_path, caplog):
    configure_logging(level="DEBUG", log_file=str(tmp_path / "logs" / "run.log"), root_logger_name="lcvn.errors_demo")

    @log_exceptions(logging.getLogger("lcvn.errors_demo"))
    def broken():
        raise ConfigError("bad key")

    with pytest.raises(ConfigError):
        broken()
    assert "Unhandled exception" in (tmp_path / "logs" / "run.log").read_text()
