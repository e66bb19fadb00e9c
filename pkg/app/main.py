import logging
from contextlib import asynccontextmanager
from pathlib import Path

import uvicorn
from fastapi import FastAPI

from app import __version__
from app.routes import experiments
from app.utils.config import settings

logging.basicConfig(level=settings.log_level.upper())
logger = logging.getLogger(__name__)

API_PREFIX = "/api/v1"


@asynccontextmanager
async def lifespan(app: FastAPI):
    root = Path(settings.output_root)
    root.mkdir(parents=True, exist_ok=True)
    logger.info(f"Pulse toolkit {__version__} up; job artifacts under {root.resolve()}")
    yield
    logger.info("Pulse toolkit shutting down")


app = FastAPI(
    lifespan=lifespan,
    title="STIRSAP Pulse Toolkit",
    description="Pulse synthesis, qudit simulation and CMA-ES optimization for STIRAP-family state transfer.",
    version=__version__,
)


@app.get("/", tags=["Root"])
async def read_root():
    '''Health check with the toolkit version.'''
    return {"message": "STIRSAP pulse toolkit", "version": __version__}


app.include_router(experiments.router, prefix=API_PREFIX)  # -> /api/v1/experiments

if __name__ == "__main__":
    # uvicorn app.main:app --host 0.0.0.0 --port 8000 --reload
    uvicorn.run("app.main:app", host="0.0.0.0", port=8000, reload=True, log_level=settings.log_level.lower())
