"""Model construction, artifact I/O and deterministic greedy decoding.

The architecture is a small encoder-decoder transformer (T5 family) over
the character vocabulary. Artifacts are directories holding the model
weights, the tokenizer alphabet and a meta.json describing how they were
produced.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch
from transformers import T5Config, T5ForConditionalGeneration

from .tokenizer import EOS_ID, PAD_ID, CharTokenizer

TOKENIZER_FILE = "tokenizer.json"
META_FILE = "meta.json"


def build_model(
    tokenizer: CharTokenizer,
    d_model: int = 128,
    num_layers: int = 2,
    num_heads: int = 4,
    d_ff: int = 256,
    dropout: float = 0.0,
) -> T5ForConditionalGeneration:
    # Untied lm_head and zero dropout: both measurably speed up association
    # memorization at this scale (tied T5 heads also downscale logits).
    config = T5Config(
        vocab_size=tokenizer.vocab_size,
        d_model=d_model,
        d_kv=d_model // num_heads,
        d_ff=d_ff,
        num_layers=num_layers,
        num_decoder_layers=num_layers,
        num_heads=num_heads,
        dropout_rate=dropout,
        pad_token_id=PAD_ID,
        eos_token_id=EOS_ID,
        decoder_start_token_id=PAD_ID,
        tie_word_embeddings=False,
    )
    return T5ForConditionalGeneration(config)


def save_artifact(
    model: T5ForConditionalGeneration,
    tokenizer: CharTokenizer,
    out_dir: str | Path,
    meta: dict,
) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(out_dir)
    tokenizer.save(out_dir / TOKENIZER_FILE)
    (out_dir / META_FILE).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return out_dir


def load_artifact(artifact_dir: str | Path) -> tuple[T5ForConditionalGeneration, CharTokenizer, dict]:
    artifact_dir = Path(artifact_dir)
    model = T5ForConditionalGeneration.from_pretrained(artifact_dir)
    model.eval()
    tokenizer = CharTokenizer.load(artifact_dir / TOKENIZER_FILE)
    meta_path = artifact_dir / META_FILE
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    return model, tokenizer, meta


def encode_batch(tokenizer: CharTokenizer, texts: list[str], device=None) -> dict[str, torch.Tensor]:
    encoded = [tokenizer.encode(text) for text in texts]
    width = max(len(ids) for ids in encoded)
    input_ids = torch.full((len(encoded), width), PAD_ID, dtype=torch.long)
    attention_mask = torch.zeros((len(encoded), width), dtype=torch.long)
    for i, ids in enumerate(encoded):
        input_ids[i, : len(ids)] = torch.tensor(ids, dtype=torch.long)
        attention_mask[i, : len(ids)] = 1
    batch = {"input_ids": input_ids, "attention_mask": attention_mask}
    if device is not None:
        batch = {k: v.to(device) for k, v in batch.items()}
    return batch


@torch.no_grad()
def greedy_generate(
    model: T5ForConditionalGeneration,
    tokenizer: CharTokenizer,
    prompts: list[str],
    max_new_tokens: int = 8,
) -> list[str]:
    """Argmax decoding, batched; no sampling anywhere, so repeated calls
    with the same artifact and prompts always agree."""
    if not prompts:
        return []
    model.eval()
    batch = encode_batch(tokenizer, prompts)
    encoder_outputs = model.get_encoder()(**batch)
    decoder_ids = torch.full((len(prompts), 1), model.config.decoder_start_token_id, dtype=torch.long)
    finished = torch.zeros(len(prompts), dtype=torch.bool)
    for _ in range(max_new_tokens):
        logits = model(
            encoder_outputs=encoder_outputs,
            attention_mask=batch["attention_mask"],
            decoder_input_ids=decoder_ids,
        ).logits[:, -1, :]
        next_ids = logits.argmax(dim=-1)
        next_ids[finished] = PAD_ID
        decoder_ids = torch.cat([decoder_ids, next_ids.unsqueeze(1)], dim=1)
        finished |= next_ids == EOS_ID
        if bool(finished.all()):
            break
    return [tokenizer.decode(ids.tolist()) for ids in decoder_ids[:, 1:]]
