"""Training-free robust late fusion of two unimodal classifiers.

Each sample's logits pass through a small recalibration matrix, obtained in
closed form from a Sylvester equation, that damps the Jacobian of the fused
prediction with respect to the logits.
"""

from .errors import FusionError
from .fusion import estimate_freq, logit_fuse, softmax, statistical_fuse
from .jacreg import FusionConfig, UnimodalHead, recalibrate, unimodal_recalibrate
from .sylvester import SylvesterOperands, solve_structured

__all__ = [
    "FusionConfig",
    "FusionError",
    "SylvesterOperands",
    "UnimodalHead",
    "estimate_freq",
    "logit_fuse",
    "recalibrate",
    "softmax",
    "solve_structured",
    "statistical_fuse",
    "unimodal_recalibrate",
]
__version__ = "0.1.0"
