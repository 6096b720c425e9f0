from importlib import metadata

from .config import PipelineConfig, load
from .errors import CuratorError
from .main import Pipeline

version = metadata.version('eo-curator')

__all__ = ['CuratorError', 'Pipeline', 'PipelineConfig', 'load', 'version']
