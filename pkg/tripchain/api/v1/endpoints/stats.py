"""
Distribution fitting endpoints
"""
from fastapi import APIRouter

from tripchain.models.analysis import LogNormalFit
from tripchain.models.requests import FitRequest
from tripchain.services.stats_service import fit_lognormal

router = APIRouter()


@router.post("/fit", response_model=LogNormalFit)
async def fit_ap_count_distribution(request: FitRequest):
    """Least-squares log-normal fit of an anchor point count pmf"""
    return fit_lognormal(request.pmf)
