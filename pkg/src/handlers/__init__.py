# Command handlers
from .norm_handler import NormHandler
from .risk_handler import RiskHandler
from .partition_handler import PartitionHandler
from .duality_handler import DualityHandler
from .probe_handler import ProbeHandler

__all__ = [
    'NormHandler',
    'RiskHandler',
    'PartitionHandler',
    'DualityHandler',
    'ProbeHandler'
]
