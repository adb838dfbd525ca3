"""Dense attention utilities with a sparsemax auxiliary head over VDN/QMIX mixers."""

from .config import RunConfig, load_config
from .env import EnvConfig, FocusFire

__version__ = "0.1.0"

__all__ = ["EnvConfig", "FocusFire", "RunConfig", "load_config", "__version__"]
