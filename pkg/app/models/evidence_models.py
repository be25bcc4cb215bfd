from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class FocalElementModel(BaseModel):
    lo: float
    hi: float
    mass: float = Field(..., gt=0.0, le=1.0)


class BpaParameterModel(BaseModel):
    name: str
    unit: Optional[str] = None
    elements: List[FocalElementModel]
    # Rows whose masses sum below 1 get a catch-all element this many
    # half-widths wide carrying the residual mass.
    complement_widening: Optional[float] = Field(None, gt=0.0)


class UncertainSpaceModel(BaseModel):
    parameters: List[BpaParameterModel]
    # parameter name -> index of the margin variable that scales it
    margin_indices: Dict[str, int] = Field(default_factory=dict)
    source: Optional[str] = None
