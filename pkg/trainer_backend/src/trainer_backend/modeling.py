"""Model and tokenizer construction, seeding, and weight digests.

The byte-level tokenizer needs no vocabulary files, so the reserved
"tiny-random" model is a fully offline randomly initialised encoder-decoder;
any other model name goes to the hub/local loader unchanged.
"""

from __future__ import annotations

import hashlib
import random

import torch
from transformers import (
    AutoModelForSeq2SeqLM,
    AutoTokenizer,
    ByT5Tokenizer,
    T5Config,
    T5ForConditionalGeneration,
)

from .config import TINY_MODEL, BackendConfig

# every job fine-tunes from the same base weights; the job seed varies only
# data order, dropout, and other in-training randomness
BASE_INIT_SEED = 0


def set_all_seeds(seed: int):
    random.seed(seed)
    torch.manual_seed(seed)
    try:
        import numpy

        numpy.random.seed(seed % 2**32)
    except ImportError:
        pass


def build_tokenizer(config: BackendConfig):
    if config.model_name == TINY_MODEL:
        return ByT5Tokenizer()
    return AutoTokenizer.from_pretrained(config.model_name)


def build_model(config: BackendConfig, tokenizer) -> torch.nn.Module:
    if config.model_name == TINY_MODEL:
        spec = T5Config(
            vocab_size=len(tokenizer),
            d_model=64,
            d_kv=16,
            d_ff=128,
            num_layers=2,
            num_heads=4,
            pad_token_id=tokenizer.pad_token_id,
            eos_token_id=tokenizer.eos_token_id,
            decoder_start_token_id=tokenizer.pad_token_id,
        )
        torch.manual_seed(BASE_INIT_SEED)
        model = T5ForConditionalGeneration(spec)
    else:
        model = AutoModelForSeq2SeqLM.from_pretrained(config.model_name)
    return model.to(torch.device(config.device))


def weight_digest(state: dict) -> str:
    """Stable fingerprint of a full parameter set (a state dict)."""
    digest = hashlib.sha256()
    for name in sorted(state):
        tensor = state[name].detach().cpu().contiguous()
        if tensor.dtype == torch.bfloat16:
            tensor = tensor.to(torch.float32)
        digest.update(name.encode("utf-8"))
        digest.update(tensor.numpy().tobytes())
    return digest.hexdigest()[:16]
