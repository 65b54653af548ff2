"""
Pipeline run endpoint
"""
import logging

from fastapi import APIRouter
from fastapi.concurrency import run_in_threadpool

from tripchain.core.config import build_study_config, reject_unknown_keys, resolve_data_path, settings
from tripchain.models.analysis import RunManifest
from tripchain.models.requests import PipelineRunRequest
from tripchain.services.pipeline_service import run_pipeline

router = APIRouter()
logger = logging.getLogger(__name__)


@router.post("/run", response_model=RunManifest)
async def run_full_pipeline(request: PipelineRunRequest):
    """
    Run the full pipeline on files under the service data directory and return the manifest
    """
    input_path = resolve_data_path(request.input_path, settings.DATA_DIR)
    city_path = resolve_data_path(request.city_path, settings.DATA_DIR)
    out_dir = resolve_data_path(request.out_dir, settings.DATA_DIR)
    reject_unknown_keys(request.config)
    config = build_study_config(request.config, {"workers": request.workers})
    logger.info(
        f"Pipeline run requested for {input_path}",
        extra={"stage": "run", "path": str(input_path)}
    )
    return await run_in_threadpool(run_pipeline, config, input_path, city_path, out_dir)
