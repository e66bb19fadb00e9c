from app.core.celery_app import celery_app
from app.services.experiment_harness import optimize_protocol, run_transfer
from app.utils.config import parse_experiment_config, settings
import logging
from pathlib import Path

logger = logging.getLogger(__name__)


def _job_config(config_data: dict, job_id: str):
    '''Validated config whose artifacts land under the output root, one directory per job.'''
    cfg = parse_experiment_config(config_data)
    updates = {}
    if "output_dir" not in config_data:
        updates["output_dir"] = str(Path(settings.output_root) / job_id)
    if "threads" not in config_data:
        updates["threads"] = settings.default_threads
    return cfg.with_updates(**updates) if updates else cfg


@celery_app.task(bind=True)
def run_optimization_task(self, config_data: dict):
    '''
    Celery task running CMA-ES for a stirsap_opt config and recording its artifacts.
    '''
    job_id = self.request.id or "local"
    logger.info(f"Executing task run_optimization_task for job {job_id}")
    try:
        cfg = _job_config(config_data, job_id)
        control, result = optimize_protocol(cfg)
    except Exception as e:
        logger.error(f"Optimization job {job_id} failed: {e}", exc_info=True)
        return {"status": "error", "message": str(e)}
    return {
        "status": "success",
        "control": control.model_dump(),
        "best_cost": result.best_cost,
        "evaluations": result.evaluations,
        "termination": result.termination.value,
        "output_dir": cfg.output_dir,
    }


@celery_app.task(bind=True)
def run_transfer_task(self, config_data: dict):
    '''
    Celery task for one transfer with trajectory and manifest files; stirsap_opt without a control optimizes first.
    '''
    job_id = self.request.id or "local"
    logger.info(f"Executing task run_transfer_task for job {job_id}")
    try:
        cfg = _job_config(config_data, job_id)
        _, report, _ = run_transfer(cfg)
    except Exception as e:
        logger.error(f"Transfer job {job_id} failed: {e}", exc_info=True)
        return {"status": "error", "message": str(e)}
    return {"status": "success", "report": report.model_dump(), "output_dir": cfg.output_dir}
