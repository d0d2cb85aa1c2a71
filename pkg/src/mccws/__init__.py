"""Multi-criteria Chinese word segmentation on a small numpy transformer.

A shared character encoder feeds per-criterion and shared affine projections,
scored by a linear-chain CRF over BMES tags. Smaller students are distilled
from a trained model, and inference can be emulated at 16-bit precision.
"""

__version__ = "0.1.0"

from .corpus import DomainId, TaggedSentence, Vocabulary, decode_tags, encode_tags, read_corpus
from .model import SegmentationResult, Segmenter
from .projection import SHARED, UnknownDomainError
from .trainer import TrainConfig, TrainReport, train_single_criteria, train_student, train_teacher

__all__ = [
    "DomainId",
    "SHARED",
    "SegmentationResult",
    "Segmenter",
    "TaggedSentence",
    "TrainConfig",
    "TrainReport",
    "UnknownDomainError",
    "Vocabulary",
    "decode_tags",
    "encode_tags",
    "read_corpus",
    "train_single_criteria",
    "train_student",
    "train_teacher",
]
