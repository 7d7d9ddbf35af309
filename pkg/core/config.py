"""
Training configuration models for the generator and the reranker.
"""

from enum import Enum
from typing import Optional

from pydantic import BaseModel, field_validator

STRING_MAX_DECODE_LENGTH = 60
TREE_MAX_DECODE_LENGTH = 120


class Mode(str, Enum):
    """What the generator emits."""
    STRING = "string"
    TREE = "tree"


class PenaltyMode(str, Enum):
    """How reranking measures content mismatch."""
    HAMMING = "hamming"
    EXPECTED = "expected"


class TrainConfig(BaseModel):
    """Generator hyperparameters and training protocol."""
    learning_rate: float = 0.001
    embedding_size: int = 50
    cell_size: int = 128
    attention_size: Optional[int] = None
    batch_size: int = 20
    max_passes: int = 1000
    patience_passes: int = 100
    top_k_tracked: int = 10
    restarts: int = 10
    max_decode_length: Optional[int] = None
    seed: int = 1
    init_scale: float = 0.1
    zero_init_decoder_cell: bool = False
    canonical_da_order: bool = False
    workers: int = 1

    @field_validator('learning_rate', 'init_scale')
    @classmethod
    def validate_positive_real(cls, v):
        if v <= 0:
            raise ValueError('learning_rate and init_scale must be positive')
        return v

    @field_validator('embedding_size', 'cell_size', 'batch_size', 'max_passes', 'patience_passes',
                     'top_k_tracked', 'restarts', 'workers')
    @classmethod
    def validate_positive(cls, v):
        if v <= 0:
            raise ValueError('Sizes, pass counts and restarts must be positive integers')
        return v

    @field_validator('attention_size', 'max_decode_length')
    @classmethod
    def validate_optional_positive(cls, v):
        if v is not None and v <= 0:
            raise ValueError('attention_size and max_decode_length must be positive when set')
        return v

    def decode_length(self, mode: str) -> int:
        if self.max_decode_length is not None:
            return self.max_decode_length
        return TREE_MAX_DECODE_LENGTH if mode == Mode.TREE.value else STRING_MAX_DECODE_LENGTH

    def attention_width(self) -> int:
        return self.attention_size or self.cell_size


class RerankConfig(BaseModel):
    """Reranker training and n-best rescoring settings."""
    penalty_weight: float = 100.0
    binarization_threshold: float = 0.5
    max_passes: int = 100
    validation_weight: float = 10.0
    penalty_mode: PenaltyMode = PenaltyMode.HAMMING

    @field_validator('penalty_weight', 'validation_weight')
    @classmethod
    def validate_non_negative(cls, v):
        if v < 0:
            raise ValueError('penalty_weight and validation_weight must be non-negative')
        return v

    @field_validator('binarization_threshold')
    @classmethod
    def validate_threshold(cls, v):
        if v < 0 or v > 1:
            raise ValueError('binarization_threshold must be between 0 and 1')
        return v

    @field_validator('max_passes')
    @classmethod
    def validate_passes(cls, v):
        if v <= 0:
            raise ValueError('max_passes must be positive')
        return v
