"""
Main API router for v1 endpoints
"""
from fastapi import APIRouter

from tripchain.api.v1.endpoints import chains, pipeline, stats

api_router = APIRouter()

api_router.include_router(chains.router, prefix="/chains", tags=["chains"])
api_router.include_router(stats.router, prefix="/stats", tags=["stats"])
api_router.include_router(pipeline.router, prefix="/pipeline", tags=["pipeline"])
