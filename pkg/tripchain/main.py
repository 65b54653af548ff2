"""
FastAPI application exposing trip chain analysis
"""
import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.encoders import jsonable_encoder
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from tripchain.api.v1.api import api_router
from tripchain.core.config import settings
from tripchain.core.error_handling import ErrorCategory, TripChainError, error_handler
from tripchain.core.logging_config import setup_logging

logger = setup_logging(settings.LOG_LEVEL, settings.LOG_FORMAT, settings.LOG_DIR)

_STATUS_BY_CATEGORY = {
    ErrorCategory.INPUT: 400,
    ErrorCategory.VALIDATION: 422,
    ErrorCategory.CONFIGURATION: 422,
    ErrorCategory.ANALYSIS: 422,
    ErrorCategory.USAGE: 400,
    ErrorCategory.INTERNAL: 500,
}


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Application lifespan manager"""
    logger.info(f"Starting {settings.PROJECT_NAME} API")
    yield
    logger.info(f"Shutting down {settings.PROJECT_NAME} API")


app = FastAPI(
    title=settings.PROJECT_NAME,
    description="Anchor points, daily trip chains, transitions and least-effort metrics from stay records",
    version=settings.VERSION,
    openapi_url=f"{settings.API_V1_STR}/openapi.json",
    lifespan=lifespan
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.BACKEND_CORS_ORIGINS,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(TripChainError)
async def tripchain_exception_handler(request: Request, exc: TripChainError):
    """Library errors become standardized error bodies"""
    error_handler.log_error(exc, stage=getattr(exc, "stage", None))
    body = error_handler.to_api_error(exc)
    return JSONResponse(
        status_code=_STATUS_BY_CATEGORY.get(exc.category, 500),
        content=jsonable_encoder(body)
    )


app.include_router(api_router, prefix=settings.API_V1_STR)


@app.get("/")
async def root():
    return {
        "message": settings.PROJECT_NAME,
        "version": settings.VERSION,
        "status": "operational",
    }


@app.get("/health")
async def health_check():
    """Health check endpoint for load balancers"""
    return {
        "status": "healthy",
        "version": settings.VERSION,
        "environment": settings.ENVIRONMENT,
    }
