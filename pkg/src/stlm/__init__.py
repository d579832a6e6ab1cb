"""stlm: a desk-scale on-device-style LLM stack.

Block-wise 4-bit weight quantization, a GPT-NeoX-style decoder with KV
cache and streaming generation, LoRA adapter merging, a checksum-verified
model container and downloader, a streaming text-to-actions parser, chat
session management, and a local HTTP/SSE chat service.
"""

from .actions import Action, ActionDetected, ParserState, ParseWarning, TextDelta, feed, flush
from .chat import ChatEngine, ChatSession, SessionStore, TurnResult
from .dialogue import DialogueSample, PaddedBatch, pad_batch, render_dialogue, split_dataset
from .download import ModelManifest, fetch_model, load_manifest, save_manifest
from .lora import LoraAdapter, merge_lora
from .modelfile import (
    SizeReport,
    inspect_model,
    md5_file,
    md5_hex,
    quantize_model,
    read_adapter,
    read_model,
    write_adapter,
    write_model,
)
from .qtensor import (
    Block4,
    QTensor,
    dense_matvec,
    dequantize,
    qmatvec,
    quantize_block,
    quantize_tensor,
)
from .tokenizer import Vocab, build_vocab, decode, encode, load_vocab, save_vocab
from .transformer import (
    DEFAULT_CONFIG,
    GenerationResult,
    KVCache,
    ModelConfig,
    ModelWeights,
    SamplerParams,
    StopReason,
    StopSpec,
    forward,
    generate,
    sample,
)

__version__ = "0.1.0"
