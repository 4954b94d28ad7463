"""Voice anonymization and privacy/utility evaluation toolkit."""

__version__ = "0.1.0"

from .audio import AudioBuffer, FrameConfig, frame_signal, overlap_add, read_wav, write_wav
from .embeddings import AnonPolicy, EmbeddingSet, anonymize_embedding_set, pseudo_vector
from .lpc import LpcFrame, PoleSet, lpc_analyze, lpc_from_poles, roots_of_lpc, synthesize
from .mcadams import McAdamsConfig, anonymize_mcadams, transform_poles

__all__ = [
    "__version__",
    "AudioBuffer",
    "FrameConfig",
    "frame_signal",
    "overlap_add",
    "read_wav",
    "write_wav",
    "AnonPolicy",
    "EmbeddingSet",
    "anonymize_embedding_set",
    "pseudo_vector",
    "LpcFrame",
    "PoleSet",
    "lpc_analyze",
    "lpc_from_poles",
    "roots_of_lpc",
    "synthesize",
    "McAdamsConfig",
    "anonymize_mcadams",
    "transform_poles",
]
