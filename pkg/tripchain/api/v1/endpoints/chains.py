"""
Chain labelling endpoints
"""
import logging

from fastapi import APIRouter

from tripchain.core.error_handling import AnalysisError
from tripchain.models.chains import STAR, ChainMode
from tripchain.models.requests import CanonicalizeRequest, CanonicalizeResponse
from tripchain.services.chain_service import canonical_label, classify_category
from tripchain.services.stats_service import chain_degree

router = APIRouter()
logger = logging.getLogger(__name__)


@router.post("/canonicalize", response_model=CanonicalizeResponse)
async def canonicalize_chain(request: CanonicalizeRequest):
    """
    Canonical label, category and degree of a node sequence
    """
    nodes = [node.strip() for node in request.nodes]
    # Consecutive repeats and star runs collapse the way the pipeline merges visits
    collapsed = [node for i, node in enumerate(nodes) if i == 0 or node != nodes[i - 1]]
    if request.mode == ChainMode.INTRA_CITY and STAR in collapsed:
        raise AnalysisError("intra-city chains cannot contain out-of-city nodes", details={"nodes": nodes})

    label = canonical_label(collapsed)
    n_aps = len({node for node in collapsed if node != STAR})
    return CanonicalizeResponse(
        label=label,
        category=classify_category(label).value if request.mode == ChainMode.HYBRID else None,
        n_aps=n_aps,
        n_edges=len(collapsed) - 1,
        degree=chain_degree(label) if n_aps else None,
    )
