import logging

from celery import Celery

from app.utils.config import settings

logger = logging.getLogger(__name__)

logger.info(f"Experiment worker: broker {settings.celery_broker_url}, results {settings.celery_result_backend}")

celery_app = Celery(
    "stirsap_worker",
    broker=settings.celery_broker_url,
    backend=settings.celery_result_backend,
    include=["app.tasks.experiment_tasks"],
)

celery_app.conf.update(
    task_serializer="json",
    accept_content=["json"],
    result_serializer="json",
    enable_utc=True,
    task_always_eager=settings.celery_task_always_eager,
    task_eager_propagates=True,
    # long optimizer jobs
    task_track_started=True,
    task_acks_late=True,
    worker_prefetch_multiplier=1,
    result_expires=7 * 24 * 3600,
)
