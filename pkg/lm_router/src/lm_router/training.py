"""Fine-tuning and evaluation of the template-id router model.

``fine_tune`` runs the published recipe: Adam (betas 0.9/0.999, epsilon
1e-8) at learning rate 1e-4 with a linear schedule, batch size 4, up to 20
epochs over the training pairs, logging training and validation loss per
epoch to a CSV.

``pretrain_base`` builds the starting checkpoint used where the published
base model cannot be downloaded: a small text-to-text model taught the
generic question → digit association game on synthetic relation keywords.
None of the five real relation names (nor their digit assignments) appear
in that corpus, so fine-tuning still has to learn every real association.
"""

from __future__ import annotations

import csv
import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

import torch
from torch.utils.data import DataLoader, Dataset

from .data import TrainingPair
from .modeling import build_model, load_artifact, save_artifact
from .protocol import RELATION_TEMPLATE_IDS, TEMPLATE_ID_STRINGS, build_prompt
from .tokenizer import PAD_ID, CharTokenizer


@dataclass
class Hyperparams:
    learning_rate: float = 1e-4
    train_batch_size: int = 4
    eval_batch_size: int = 4
    num_epochs: int = 20
    question_length: int = 512
    target_length: int = 512
    scheduler: str = "linear"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_epsilon: float = 1e-8


@dataclass
class EpochLoss:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class TrainResult:
    artifact_dir: Path
    losses: list[EpochLoss] = field(default_factory=list)
    seed: int = 0
    wall_time_seconds: float = 0.0

    @property
    def final_val_loss(self) -> float:
        return self.losses[-1].val_loss


class PairDataset(Dataset):
    def __init__(self, pairs: list[TrainingPair], tokenizer: CharTokenizer, hp: Hyperparams):
        self.items = [
            (
                tokenizer.encode(p.prompt)[: hp.question_length],
                tokenizer.encode(p.target)[: hp.target_length],
            )
            for p in pairs
        ]

    def __len__(self):
        return len(self.items)

    def __getitem__(self, index):
        return self.items[index]


def _collate(batch):
    inputs, targets = zip(*batch)
    in_width = max(len(x) for x in inputs)
    out_width = max(len(y) for y in targets)
    input_ids = torch.full((len(batch), in_width), PAD_ID, dtype=torch.long)
    attention_mask = torch.zeros((len(batch), in_width), dtype=torch.long)
    labels = torch.full((len(batch), out_width), -100, dtype=torch.long)
    for i, (x, y) in enumerate(zip(inputs, targets)):
        input_ids[i, : len(x)] = torch.tensor(x, dtype=torch.long)
        attention_mask[i, : len(x)] = 1
        labels[i, : len(y)] = torch.tensor(y, dtype=torch.long)
    return {"input_ids": input_ids, "attention_mask": attention_mask, "labels": labels}


def _loader(dataset: PairDataset, batch_size: int, shuffle: bool, seed: int) -> DataLoader:
    generator = torch.Generator()
    generator.manual_seed(seed)
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        generator=generator if shuffle else None,
        collate_fn=_collate,
    )


@torch.no_grad()
def dataset_loss(model, dataset: PairDataset, batch_size: int) -> float:
    """Mean cross-entropy per target token over the whole dataset."""
    model.eval()
    total, count = 0.0, 0
    for batch in _loader(dataset, batch_size, shuffle=False, seed=0):
        logits = model(**batch).logits
        labels = batch["labels"]
        loss = torch.nn.functional.cross_entropy(
            logits.view(-1, logits.size(-1)), labels.view(-1), ignore_index=-100, reduction="sum"
        )
        total += float(loss)
        count += int((labels != -100).sum())
    return total / max(count, 1)


def train_loop(
    model,
    tokenizer: CharTokenizer,
    train_pairs: list[TrainingPair],
    val_pairs: list[TrainingPair],
    hp: Hyperparams,
    seed: int,
    log_path: Path | None = None,
    steps_per_epoch: int | None = None,
    early_stop_val_loss: float | None = None,
    min_epochs: int = 1,
) -> list[EpochLoss]:
    """The shared optimization loop: Adam + linear decay to zero over the
    full step budget, one train/validation loss row per epoch.

    ``steps_per_epoch`` fixes the optimizer steps per epoch regardless of
    dataset size (cycling through reshuffled passes); None means one pass.
    ``early_stop_val_loss`` ends training once validation loss reaches the
    target (checked from ``min_epochs`` on), which the epoch budget permits
    ("up to" num_epochs).
    """
    torch.manual_seed(seed)
    train_set = PairDataset(train_pairs, tokenizer, hp)
    val_set = PairDataset(val_pairs, tokenizer, hp)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=hp.learning_rate, betas=hp.adam_betas, eps=hp.adam_epsilon
    )
    pass_steps = math.ceil(len(train_set) / hp.train_batch_size)
    epoch_steps = steps_per_epoch or pass_steps
    total_steps = max(1, epoch_steps * hp.num_epochs)
    if hp.scheduler != "linear":
        raise ValueError(f"unsupported scheduler {hp.scheduler!r}")
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: max(0.0, 1.0 - step / total_steps)
    )

    def batches(start_epoch: int):
        """Endless stream of reshuffled passes, seeded per pass."""
        pass_index = start_epoch
        while True:
            yield from _loader(train_set, hp.train_batch_size, shuffle=True, seed=seed + pass_index)
            pass_index += 1

    losses: list[EpochLoss] = []
    writer = None
    log_handle = None
    if log_path is not None:
        log_handle = Path(log_path).open("w", encoding="utf-8", newline="")
        writer = csv.writer(log_handle)
        writer.writerow(["epoch", "train_loss", "val_loss"])
    stream = batches(0)
    try:
        for epoch in range(1, hp.num_epochs + 1):
            model.train()
            epoch_total, epoch_count = 0.0, 0
            for _ in range(epoch_steps):
                batch = next(stream)
                optimizer.zero_grad()
                out = model(**batch)
                out.loss.backward()
                torch.nn.utils.clip_grad_norm_(model.parameters(), 1.0)
                optimizer.step()
                scheduler.step()
                n_tokens = int((batch["labels"] != -100).sum())
                epoch_total += float(out.loss.detach()) * n_tokens
                epoch_count += n_tokens
            row = EpochLoss(
                epoch=epoch,
                train_loss=epoch_total / max(epoch_count, 1),
                val_loss=dataset_loss(model, val_set, hp.eval_batch_size),
            )
            losses.append(row)
            if writer is not None:
                writer.writerow([row.epoch, f"{row.train_loss:.8f}", f"{row.val_loss:.8f}"])
                log_handle.flush()
            if (
                early_stop_val_loss is not None
                and epoch >= min_epochs
                and row.val_loss <= early_stop_val_loss
            ):
                break
    finally:
        if log_handle is not None:
            log_handle.close()
    return losses


def fine_tune(
    pairs: list[TrainingPair],
    holdout: list[TrainingPair],
    hp: Hyperparams | None = None,
    base_dir: str | Path | None = None,
    out_dir: str | Path = "router_model",
    seed: int = 42,
    steps_per_epoch: int = 1000,
    early_stop_val_loss: float | None = None,
    min_epochs: int = 1,
) -> TrainResult:
    """Fine-tune the base checkpoint on routing pairs and save the artifact
    (weights, tokenizer, meta with the recorded seed) plus loss_log.csv.

    An epoch is 1000 optimizer steps by default, matching the published
    training log (20 epochs / 20000 steps at batch size 4), which cycles
    the few-hundred-pair training set several times per epoch; pass
    steps_per_epoch=None for strict single-pass epochs.
    """
    if not pairs:
        raise ValueError("no training pairs")
    if not holdout:
        raise ValueError("no holdout pairs")
    hp = hp or Hyperparams()
    if base_dir is None:
        raise ValueError("base_dir is required: pass the base checkpoint to fine-tune")
    model, tokenizer, base_meta = load_artifact(base_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    started = time.monotonic()
    losses = train_loop(
        model, tokenizer, pairs, holdout, hp, seed,
        log_path=out_dir / "loss_log.csv",
        steps_per_epoch=steps_per_epoch,
        early_stop_val_loss=early_stop_val_loss,
        min_epochs=min_epochs,
    )
    wall = time.monotonic() - started
    save_artifact(
        model,
        tokenizer,
        out_dir,
        meta={
            "kind": "fine-tuned-router",
            "seed": seed,
            "base": str(base_dir),
            "base_meta": base_meta,
            "pairs": len(pairs),
            "holdout": len(holdout),
            "hyperparams": {
                "learning_rate": hp.learning_rate,
                "train_batch_size": hp.train_batch_size,
                "eval_batch_size": hp.eval_batch_size,
                "num_epochs": hp.num_epochs,
                "question_length": hp.question_length,
                "target_length": hp.target_length,
                "scheduler": hp.scheduler,
                "optimizer": "adam",
                "betas": list(hp.adam_betas),
                "epsilon": hp.adam_epsilon,
            },
            "steps_per_epoch": steps_per_epoch,
            "epochs_run": len(losses),
            "wall_time_seconds": wall,
        },
    )
    return TrainResult(artifact_dir=out_dir, losses=losses, seed=seed, wall_time_seconds=wall)


def model_router_fn(model, tokenizer: CharTokenizer):
    """Wrap an artifact as a prompts → raw outputs function."""
    from .modeling import greedy_generate

    return lambda prompts: greedy_generate(model, tokenizer, prompts)


def evaluate_router(router_fn, holdout: list[TrainingPair]) -> float:
    """Holdout accuracy of a prompts → outputs function: the reply must be
    exactly the target id string after trimming; undecodable or out-of-set
    output counts as incorrect."""
    if not holdout:
        raise ValueError("holdout is empty")
    outputs = router_fn([p.prompt for p in holdout])
    correct = 0
    for output, pair in zip(outputs, holdout):
        answer = output.strip()
        if answer in TEMPLATE_ID_STRINGS and answer == pair.target:
            correct += 1
    return correct / len(holdout)


# --- base checkpoint -------------------------------------------------------

_SUBJECT_WORDS = (
    "Avon", "Borealis", "Cascade", "Derwent", "Ellington", "Fenwick",
    "Galway", "Halcyon", "Ithaca", "Juniper", "Kestrel", "Lorient",
    "Meridian", "Nocturne", "Orpheus", "Pembroke", "Quarry", "Rosewood",
    "Sutton", "Tilbury", "Umbra", "Vantage", "Weymouth", "Yarrow", "Zephyr",
)

_CONSONANTS = "bcdfghjklmnprstvwz"
_VOWELS = "aeiou"


def _random_word(rng: random.Random, syllables: int) -> str:
    return "".join(rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(syllables))


def synthetic_keywords(count: int, rng: random.Random) -> list[str]:
    """Distinct camelCase relation-like keywords, disjoint from the real
    relation names (pronounceable random words, so no two collide on a
    shared part pool)."""
    keywords = set()
    while len(keywords) < count:
        parts = [_random_word(rng, rng.randint(2, 3)) for _ in range(rng.randint(2, 3))]
        keyword = parts[0] + "".join(p.capitalize() for p in parts[1:])
        if keyword not in RELATION_TEMPLATE_IDS:
            keywords.add(keyword)
    return sorted(keywords)


def _random_subject(rng: random.Random) -> str:
    # High-entropy subjects stop the model from keying on subject identity
    # instead of the keyword.
    parts = [rng.choice(_SUBJECT_WORDS), _random_word(rng, rng.randint(2, 3)).capitalize()]
    rng.shuffle(parts)
    if rng.random() < 0.5:
        parts.append(str(rng.randint(1, 9999)))
    return " ".join(parts)


def synthetic_association_pairs(
    n_keywords: int, examples_per_keyword: int, seed: int
) -> tuple[list[TrainingPair], list[TrainingPair]]:
    """The base-model curriculum: each synthetic keyword gets a fixed random
    digit, subjects vary, and held-out pairs reuse the keywords with unseen
    subjects (the association is what must generalize)."""
    rng = random.Random(seed)
    keywords = synthetic_keywords(n_keywords, rng)
    train, held = [], []
    for keyword in keywords:
        digit = str(rng.randint(1, 5))
        for i in range(examples_per_keyword):
            pair = TrainingPair(prompt=build_prompt(_random_subject(rng), keyword), target=digit)
            (held if i < max(1, examples_per_keyword // 10) else train).append(pair)
    rng.shuffle(train)
    return train, held


def pretrain_base(
    out_dir: str | Path,
    seed: int = 7,
    n_keywords: int = 25,
    examples_per_keyword: int = 150,
    epochs: int = 16,
    batch_size: int = 32,
    learning_rate: float = 1e-3,
    d_model: int = 128,
    num_layers: int = 2,
    early_stop_val_loss: float | None = None,
) -> TrainResult:
    """Create the local base checkpoint for offline fine-tuning runs."""
    torch.manual_seed(seed)  # covers model init; train_loop reseeds for the epochs
    tokenizer = CharTokenizer()
    model = build_model(tokenizer, d_model=d_model, num_layers=num_layers)
    train, held = synthetic_association_pairs(n_keywords, examples_per_keyword, seed)
    hp = Hyperparams(
        learning_rate=learning_rate,
        train_batch_size=batch_size,
        eval_batch_size=64,
        num_epochs=epochs,
    )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()
    losses = train_loop(
        model, tokenizer, train, held, hp, seed,
        log_path=out_dir / "loss_log.csv",
        early_stop_val_loss=early_stop_val_loss,
    )
    wall = time.monotonic() - started
    save_artifact(
        model,
        tokenizer,
        out_dir,
        meta={
            "kind": "association-base",
            "seed": seed,
            "n_keywords": n_keywords,
            "examples_per_keyword": examples_per_keyword,
            "epochs": epochs,
            "final_val_loss": losses[-1].val_loss,
            "wall_time_seconds": wall,
        },
    )
    return TrainResult(artifact_dir=out_dir, losses=losses, seed=seed, wall_time_seconds=wall)
