"""qaforge: raw documents in, verified and decontaminated QA records out."""

from .types import PIPELINE_VERSION

__version__ = PIPELINE_VERSION
