from fastapi import APIRouter, HTTPException, status, Body
from fastapi.concurrency import run_in_threadpool
from celery.result import AsyncResult
from pydantic import BaseModel, Field
from typing import Any, Dict, Optional
import logging

from app.core.celery_app import celery_app
from app.core.exceptions import ConfigError, NumericalError
from app.models.metrics import FidelityReport
from app.services.experiment_harness import build_schedule, evaluate_transfer
from app.tasks.experiment_tasks import run_optimization_task, run_transfer_task
from app.utils.config import parse_experiment_config

logger = logging.getLogger(__name__)
router = APIRouter(prefix="/experiments", tags=["Experiments"])


class ExperimentRequest(BaseModel):
    config: Dict[str, Any] = Field(..., description="Experiment config, same layout as the TOML file")


class ScheduleResponse(BaseModel):
    schedule: Dict[str, Any]


class JobSubmitted(BaseModel):
    job_id: str
    status: str = "queued"


class JobStatus(BaseModel):
    job_id: str
    state: str
    result: Optional[Dict[str, Any]] = None


def _http_error(e: Exception, action: str) -> HTTPException:
    if isinstance(e, (ConfigError, ValueError)):
        logger.warning(f"Rejected {action} request: {e}")
        return HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    if isinstance(e, NumericalError):
        logger.error(f"Numerical failure during {action}: {e}", exc_info=True)
        return HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=str(e))
    logger.error(f"Unexpected error during {action}: {e}", exc_info=True)
    return HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=f"Failed to process {action} request.")


@router.post("/pulses", response_model=ScheduleResponse, summary="Sample Protocol Schedule")
async def handle_pulses(request_body: ExperimentRequest = Body(...)):
    '''
    Builds the configured protocol's drive schedule and returns its sampled envelopes.
    '''
    try:
        cfg = parse_experiment_config(request_body.config)
        schedule = await run_in_threadpool(build_schedule, cfg)
        return ScheduleResponse(schedule=schedule.to_record())
    except Exception as e:
        raise _http_error(e, "pulses")


@router.post("/simulate", response_model=FidelityReport, summary="Simulate State Transfer")
async def handle_simulate(request_body: ExperimentRequest = Body(...)):
    '''
    Runs one |0⟩ → |2⟩ transfer and returns its fidelity report. No files are written.
    '''
    try:
        cfg = parse_experiment_config(request_body.config)
        logger.info(f"Simulating {cfg.protocol.value} at T = {cfg.pulse.total_time} ns")
        return await run_in_threadpool(evaluate_transfer, cfg)
    except Exception as e:
        raise _http_error(e, "simulate")


@router.post(
    "/optimize",
    response_model=JobSubmitted,
    status_code=status.HTTP_202_ACCEPTED,
    summary="Queue CMA-ES Optimization",
)
async def handle_optimize(request_body: ExperimentRequest = Body(...)):
    '''
    Validates the config and queues a background optimization job.
    '''
    try:
        parse_experiment_config(request_body.config)
        task = run_optimization_task.delay(request_body.config)
        logger.info(f"Queued optimization job {task.id}")
        return JobSubmitted(job_id=task.id)
    except Exception as e:
        raise _http_error(e, "optimize")


@router.post(
    "/transfer-jobs",
    response_model=JobSubmitted,
    status_code=status.HTTP_202_ACCEPTED,
    summary="Queue Transfer Run",
)
async def handle_transfer_job(request_body: ExperimentRequest = Body(...)):
    '''
    Queues one transfer whose trajectory and manifest are written under the job's output directory.
    '''
    try:
        parse_experiment_config(request_body.config)
        task = run_transfer_task.delay(request_body.config)
        logger.info(f"Queued transfer job {task.id}")
        return JobSubmitted(job_id=task.id)
    except Exception as e:
        raise _http_error(e, "transfer job")


@router.get("/jobs/{job_id}", response_model=JobStatus, summary="Job Status")
async def handle_job_status(job_id: str):
    result = AsyncResult(job_id, app=celery_app)
    payload = result.result if result.successful() else None
    return JobStatus(job_id=job_id, state=result.state, result=payload)
