"""
Decoder module - conditional LSTM with attention, deep output, generation and checkpoints.
"""

from .sequence import BOS, EOS, SPECIAL_TOKENS, UNK, CaptionSequence
from .params import (
    DECODER_BLOCKS,
    DecoderParams,
    ModelDims,
    block_shapes,
    init_params,
    zero_params,
)
from .cell import (
    HARD,
    MODES,
    SOFT,
    DecodeStep,
    DecoderSession,
    DecoderState,
    decode_step,
    init_state,
    lstm_step,
    one_hot_rows,
    output_distribution,
)
from .generation import (
    BEAM,
    GREEDY,
    SAMPLE,
    STRATEGIES,
    generate,
    generate_batch,
    teacher_forced_log_likelihood,
)
from .unroll import CaptionGraph, caption_bindings, caption_graph, parameter_gradients
from .nwgm import LocationMarginals, location_marginals, marginal_step_distribution, nwgm_distribution
from .checkpoint import (
    CheckpointFormatError,
    CheckpointMagicError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from modules.attention import DimensionMismatchError

__all__ = [
    'BOS',
    'EOS',
    'UNK',
    'SPECIAL_TOKENS',
    'CaptionSequence',
    'DECODER_BLOCKS',
    'DecoderParams',
    'ModelDims',
    'block_shapes',
    'init_params',
    'zero_params',
    'HARD',
    'MODES',
    'SOFT',
    'DecodeStep',
    'DecoderSession',
    'DecoderState',
    'decode_step',
    'init_state',
    'lstm_step',
    'one_hot_rows',
    'output_distribution',
    'BEAM',
    'GREEDY',
    'SAMPLE',
    'STRATEGIES',
    'generate',
    'generate_batch',
    'teacher_forced_log_likelihood',
    'CaptionGraph',
    'caption_bindings',
    'caption_graph',
    'parameter_gradients',
    'LocationMarginals',
    'location_marginals',
    'marginal_step_distribution',
    'nwgm_distribution',
    'CheckpointFormatError',
    'CheckpointMagicError',
    'CheckpointTruncatedError',
    'CheckpointVersionError',
    'decode_checkpoint',
    'encode_checkpoint',
    'load_checkpoint',
    'save_checkpoint',
    'DimensionMismatchError',
]
