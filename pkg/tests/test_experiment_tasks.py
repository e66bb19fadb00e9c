from pathlib import Path
from unittest.mock import patch

from app.tasks.experiment_tasks import _job_config, run_optimization_task, run_transfer_task
from app.utils.config import settings

CONFIG = {
    "protocol": "stirsap",
    "pulse": {"omega0": 0.18849555921538758, "total_time": 8.0},
    "propagation": {"dt": 0.02, "record_stride": 10},
}


def test_transfer_task_writes_into_given_directory(tmp_path):
    config = {**CONFIG, "output_dir": str(tmp_path)}
    outcome = run_transfer_task.apply(args=[config]).get()
    assert outcome["status"] == "success"
    assert outcome["output_dir"] == str(tmp_path)
    assert (tmp_path / "trajectory.csv").is_file()


def test_transfer_task_defaults_to_job_directory(tmp_path):
    with patch.object(settings, "output_root", str(tmp_path)):
        outcome = run_transfer_task.apply(args=[CONFIG], task_id="job-7").get()
    assert outcome["status"] == "success"
    assert Path(outcome["output_dir"]) == tmp_path / "job-7"
    assert (tmp_path / "job-7" / "manifest.json").is_file()


def test_optimization_task(tmp_path):
    config = {**CONFIG, "protocol": "stirsap_opt", "optimizer": {"max_evaluations": 17}, "output_dir": str(tmp_path)}
    outcome = run_optimization_task.apply(args=[config]).get()
    assert outcome["status"] == "success"
    assert outcome["evaluations"] == 17
    assert set(outcome["control"]) == {"alpha_p", "alpha_s", "beta_p", "beta_s"}
    assert (tmp_path / "optimizer_log.csv").is_file()


def test_invalid_config_reports_error():
    outcome = run_optimization_task.apply(args=[{**CONFIG, "protocol": "stirsap_opt"}]).get()
    assert outcome["status"] == "error"
    assert "stirsap_opt" in outcome["message"]


def test_job_config_takes_worker_count_from_settings():
    with patch.object(settings, "default_threads", 3):
        assert _job_config(CONFIG, "job-1").threads == 3
        assert _job_config({**CONFIG, "threads": 2}, "job-1").threads == 2


def test_unexpected_failure_is_reported_not_raised(tmp_path):
    config = {**CONFIG, "output_dir": str(tmp_path)}
    with patch("app.tasks.experiment_tasks.run_transfer", side_effect=RuntimeError("worker lost its scratch space")):
        outcome = run_transfer_task.apply(args=[config]).get()
    assert outcome == {"status": "error", "message": "worker lost its scratch space"}


def test_unexpected_optimizer_failure_is_reported(tmp_path):
    config = {**CONFIG, "protocol": "stirsap_opt", "optimizer": {"max_evaluations": 5}, "output_dir": str(tmp_path)}
    with patch("app.tasks.experiment_tasks.optimize_protocol", side_effect=MemoryError("out of memory")):
        outcome = run_optimization_task.apply(args=[config]).get()
    assert outcome["status"] == "error"
    assert outcome["message"] == "out of memory"


def test_thermal_transfer_job_succeeds(tmp_path):
    config = {**CONFIG, "transmon": {"level_count": 4, "thermal_pop1": 0.02}, "output_dir": str(tmp_path)}
    outcome = run_transfer_task.apply(args=[config]).get()
    assert outcome["status"] == "success"
    assert 0.0 <= outcome["report"]["fidelity"] <= 1.0
