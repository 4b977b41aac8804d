"""Fine-tuning with early stopping, greedy decoding, and checkpoint I/O.

Every monitored score is oriented so that higher is better (the loss
monitor reports negated loss); best_val_metric on the wire follows the same
convention. Each job keeps exactly one checkpoint, the best-validation
weights, so sweeps never accumulate per-epoch files.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import torch

from .config import BackendConfig
from .modeling import set_all_seeds, weight_digest

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 16
DEFAULT_MAX_EPOCHS = 30

# targets that mark a labeling job, where exact decodes are the point
LABEL_SET = frozenset({"positive", "negative", "neutral"})

WEIGHTS_FILE = "weights.pt"
META_FILE = "meta.json"


def read_pairs(path: str | Path) -> list[tuple[str, str]]:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            try:
                pairs.append((str(record["input"]), str(record["target"])))
            except (KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: record needs input and target") from exc
    if not pairs:
        raise ValueError(f"{path}: no pairs")
    return pairs


# ---- monitored metrics ----


def macro_f1(preds: list[str], golds: list[str]) -> float:
    """Macro-averaged F1 over the classes present in the golds, as a percentage."""
    classes = sorted(set(golds))
    total = 0.0
    for cls in classes:
        tp = sum(1 for p, g in zip(preds, golds) if p == cls and g == cls)
        fp = sum(1 for p, g in zip(preds, golds) if p == cls and g != cls)
        fn = sum(1 for p, g in zip(preds, golds) if p != cls and g == cls)
        total += (2.0 * tp / (2 * tp + fp + fn)) if tp else 0.0
    return 100.0 * total / len(classes)


def accuracy(preds: list[str], golds: list[str]) -> float:
    return 100.0 * sum(p == g for p, g in zip(preds, golds)) / len(golds)


def pick_monitor(monitor: str, val_targets: list[str]) -> str:
    if monitor != "auto":
        return monitor
    return "macro_f1" if set(val_targets) <= LABEL_SET else "loss"


# ---- batching and decoding ----


def encode_batch(tokenizer, batch: list[tuple[str, str]], config: BackendConfig):
    encoded = tokenizer(
        [text for text, _ in batch],
        return_tensors="pt",
        padding=True,
        truncation=True,
        max_length=config.max_input_length,
    )
    labels = tokenizer(
        [target for _, target in batch],
        return_tensors="pt",
        padding=True,
        truncation=True,
        max_length=config.max_target_length,
    ).input_ids
    labels[labels == tokenizer.pad_token_id] = -100
    encoded["labels"] = labels
    return encoded


def greedy_decode(
    model,
    tokenizer,
    inputs: list[str],
    config: BackendConfig,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> list[str]:
    model.eval()
    device = next(model.parameters()).device
    outputs: list[str] = []
    for start in range(0, len(inputs), batch_size):
        encoded = tokenizer(
            inputs[start : start + batch_size],
            return_tensors="pt",
            padding=True,
            truncation=True,
            max_length=config.max_input_length,
        ).to(device)
        with torch.no_grad():
            generated = model.generate(
                **encoded,
                max_new_tokens=config.max_target_length,
                num_beams=1,
                do_sample=False,
            )
        outputs.extend(tokenizer.batch_decode(generated, skip_special_tokens=True))
    return outputs


def val_score(
    model,
    tokenizer,
    val_pairs: list[tuple[str, str]],
    config: BackendConfig,
    monitor: str,
    batch_size: int,
) -> float:
    if monitor == "loss":
        model.eval()
        device = next(model.parameters()).device
        total, count = 0.0, 0
        with torch.no_grad():
            for start in range(0, len(val_pairs), batch_size):
                batch = val_pairs[start : start + batch_size]
                encoded = encode_batch(tokenizer, batch, config).to(device)
                total += float(model(**encoded).loss) * len(batch)
                count += len(batch)
        return -total / count
    preds = greedy_decode(model, tokenizer, [text for text, _ in val_pairs], config, batch_size)
    golds = [target for _, target in val_pairs]
    return accuracy(preds, golds) if monitor == "accuracy" else macro_f1(preds, golds)


# ---- the training loop ----


@dataclass
class TrainOutcome:
    best_metric: float
    best_state: dict
    epochs_run: int
    monitor: str


def _snapshot(model) -> dict:
    return {name: tensor.detach().cpu().clone() for name, tensor in model.state_dict().items()}


def fine_tune(
    model,
    tokenizer,
    config: BackendConfig,
    train_pairs: list[tuple[str, str]],
    val_pairs: list[tuple[str, str]],
    hyperparams: dict,
    seed: int,
) -> TrainOutcome:
    lr = float(hyperparams["learning_rate"])
    batch_size = int(hyperparams.get("batch_size", DEFAULT_BATCH_SIZE))
    max_epochs = int(hyperparams.get("max_epochs", DEFAULT_MAX_EPOCHS))
    patience = int(hyperparams.get("early_stop_patience", config.patience))
    if batch_size < 1 or patience < 1 or max_epochs < 0:
        raise ValueError("need batch_size >= 1, patience >= 1, max_epochs >= 0")
    monitor = pick_monitor(
        str(hyperparams.get("monitor", config.monitor)), [target for _, target in val_pairs]
    )

    set_all_seeds(seed)
    device = next(model.parameters()).device
    optimizer = torch.optim.AdamW(model.parameters(), lr=lr)
    shuffler = torch.Generator().manual_seed(seed)

    # score the starting weights first, so a job that never improves keeps
    # (and reports) exactly what it started from
    best = val_score(model, tokenizer, val_pairs, config, monitor, batch_size)
    best_state = _snapshot(model)
    epochs_run = 0
    since_best = 0
    for epoch in range(1, max_epochs + 1):
        model.train()
        order = torch.randperm(len(train_pairs), generator=shuffler).tolist()
        for start in range(0, len(order), batch_size):
            batch = [train_pairs[i] for i in order[start : start + batch_size]]
            encoded = encode_batch(tokenizer, batch, config).to(device)
            loss = model(**encoded).loss
            loss.backward()
            optimizer.step()
            optimizer.zero_grad()
        epochs_run = epoch
        score = val_score(model, tokenizer, val_pairs, config, monitor, batch_size)
        logger.info("epoch %d: %s=%.4f (best %.4f)", epoch, monitor, score, best)
        if score > best:
            best = score
            best_state = _snapshot(model)
            since_best = 0
        else:
            since_best += 1
            if since_best >= patience:
                break
    return TrainOutcome(best_metric=best, best_state=best_state, epochs_run=epochs_run, monitor=monitor)


# ---- checkpoint store ----


def checkpoint_path(config: BackendConfig, model_id: str) -> Path:
    return config.checkpoint_dir / model_id


def save_checkpoint(config: BackendConfig, model_id: str, state: dict, meta: dict):
    target = checkpoint_path(config, model_id)
    target.mkdir(parents=True, exist_ok=True)
    torch.save(state, target / WEIGHTS_FILE)
    with open(target / META_FILE, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, ensure_ascii=False, indent=2)
        fh.write("\n")


def load_checkpoint(config: BackendConfig, model_id: str) -> tuple[dict, dict] | None:
    target = checkpoint_path(config, model_id)
    weights = target / WEIGHTS_FILE
    if not weights.exists():
        return None
    state = torch.load(weights, map_location="cpu", weights_only=True)
    with open(target / META_FILE, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    return state, meta


def checkpoint_digest(config: BackendConfig, model_id: str) -> str | None:
    loaded = load_checkpoint(config, model_id)
    return weight_digest(loaded[0]) if loaded else None
