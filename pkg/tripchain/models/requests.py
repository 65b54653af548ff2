"""
Request and response bodies of the HTTP service
"""
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from tripchain.models.chains import ChainMode


class CanonicalizeRequest(BaseModel):
    """Visit sequence as arbitrary node keys; '*' marks an out-of-city node"""
    nodes: List[str] = Field(..., min_length=1)
    mode: ChainMode = ChainMode.HYBRID


class CanonicalizeResponse(BaseModel):
    label: str
    category: Optional[str] = None
    n_aps: int
    n_edges: int
    degree: Optional[float] = None


class FitRequest(BaseModel):
    pmf: Dict[int, float] = Field(..., description="Probability per anchor point count")


class PipelineRunRequest(BaseModel):
    input_path: str
    city_path: str
    out_dir: str
    config: Dict[str, str] = Field(default_factory=dict, description="Key-value study configuration")
    workers: Optional[int] = Field(default=None, ge=1)
