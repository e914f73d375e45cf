"""Tensor-train compressed transformer training, cost models, and memory planning."""

from .tensor import (ShapeError, FoldingMap, TTWeight, TTMTable, contract,
                     tt_reconstruct, tt_as_matrix, ttm_reconstruct,
                     tt_param_count, ttm_param_count)
from .meter import BufferMeter
from .tt_linear import CacheError, TTGrads, TTLinearLayer
from .ttm_embedding import TTMEmbedding, embed_sum, embed_sum_backward
from .config import ConfigError, SyntheticSpec, TrainConfig, load_config, seed_streams
from .model import (ActivationStore, Classifier, DenseReference, EncoderBlock,
                    TensorTransformer, compression_summary, factor_inventory)
from .costmodel import (LayerConfig, CostReport, SchemeCost, compare_report, sweep,
                        mul_mm, mem_mm, mul_tt_rtl, mem_tt_rtl, mul_btt, mem_btt,
                        mul_ttm, mem_ttm)
from .schedule import ScheduleTrace, Task, schedule_fused_bp, schedule_qkv
from .bram import (BlockSpec, BramPlan, FactorArray, blocks_partitioning,
                   blocks_reshaping, optimize)
from .checkpoint import load_checkpoint, save_checkpoint

__version__ = "0.1.0"
