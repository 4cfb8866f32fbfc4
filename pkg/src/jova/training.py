"""Mini-batch training with early stopping, batched inference and model files."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from jova.featurizers import FeaturizerConfig, featurize_compound, featurize_target
from jova.model import JovaModel, ModelConfig, collate
from jova.tensor import Adam, Tape, load_checkpoint, mse_loss, save_checkpoint

log = logging.getLogger(__name__)


@dataclass
class TrainSettings:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_steps: int = 2000
    eval_every: int = 10
    patience: int = 50  # evaluations without improvement
    seed: int = 0


@dataclass
class TrainResult:
    steps: int
    best_step: int
    best_valid_rmse: float | None
    train_losses: list[float] = field(default_factory=list)
    valid_rmses: list[tuple[int, float]] = field(default_factory=list)


def standardize_targets(config: ModelConfig, y) -> None:
    """Store the training label mean/std so the head predicts in dataset units."""
    y = np.asarray(y, dtype=np.float64)
    config.target_mean = float(y.mean())
    std = float(y.std())
    config.target_std = std if std > 1e-8 else 1.0


def predict_samples(model: JovaModel, samples, batch_size: int = 64) -> np.ndarray:
    """Predictions for view dicts, without recording a tape."""
    out = []
    kinds = model.config.kinds
    for start in range(0, len(samples), batch_size):
        batch = collate(samples[start:start + batch_size], kinds)
        out.append(np.asarray(model(batch).data, dtype=np.float64))
    return np.concatenate(out) if out else np.zeros(0)


def train_model(model: JovaModel, samples, y, settings: TrainSettings,
                valid_samples=None, valid_y=None) -> TrainResult:
    """Adam on the mean squared error.

    With a validation set, the model is evaluated every ``eval_every`` steps,
    training stops after ``patience`` evaluations without improvement and the
    best parameters are restored.
    """
    y = np.asarray(y, dtype=np.float64)
    n = len(samples)
    if n == 0:
        raise ValueError("no training samples")
    kinds = model.config.kinds
    params = model.parameters()
    dtype = params[0].dtype
    opt = Adam(params, settings.lr, settings.beta1, settings.beta2, settings.eps)
    rng = np.random.default_rng(settings.seed)
    result = TrainResult(0, 0, None)
    use_valid = valid_samples is not None and len(valid_samples) > 0
    best_state = None
    best = np.inf
    stale = 0
    order = np.zeros(0, dtype=np.int64)
    cursor = 0
    for step in range(1, settings.max_steps + 1):
        if cursor >= len(order):
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor:cursor + settings.batch_size]
        cursor += settings.batch_size
        batch = collate([samples[i] for i in idx], kinds)
        opt.zero_grad()
        with Tape() as tape:
            loss = mse_loss(model(batch), y[idx].astype(dtype))
        tape.backward(loss)
        opt.step()
        result.steps = step
        result.train_losses.append(float(loss.data))
        if use_valid and (step % settings.eval_every == 0 or step == settings.max_steps):
            pred = predict_samples(model, valid_samples)
            score = float(np.sqrt(np.mean((pred - np.asarray(valid_y)) ** 2)))
            result.valid_rmses.append((step, score))
            if score < best:
                best, stale = score, 0
                best_state = {k: v.copy() for k, v in model.state_dict().items()}
                result.best_step = step
            else:
                stale += 1
                if stale >= settings.patience:
                    log.info("early stop at step %d (best %.4f at %d)", step, best, result.best_step)
                    break
    if best_state is not None:
        model.load_state_dict(best_state)
        result.best_valid_rmse = best
    else:
        result.best_step = result.steps
    return result


def save_model(path, model: JovaModel, featurizer: FeaturizerConfig, extra: dict | None = None) -> None:
    meta = {"model_config": model.config.to_json(),
            "featurizer": json.dumps(featurizer.__dict__, sort_keys=True)}
    meta.update(extra or {})
    save_checkpoint(path, model.state_dict(), meta)


def load_model(path) -> tuple[JovaModel, FeaturizerConfig, dict]:
    params, meta = load_checkpoint(path)
    config = ModelConfig.from_json(meta["model_config"])
    featurizer = FeaturizerConfig(**json.loads(meta["featurizer"]))
    model = JovaModel(config)
    model.load_state_dict(params)
    return model, featurizer, meta


def featurize_pair(smiles: str, sequence: str, featurizer: FeaturizerConfig, kinds) -> dict:
    kinds = list(kinds)
    views = featurize_compound(smiles, featurizer, [k for k in kinds if k.entity == "compound"])
    views.update(featurize_target(sequence, featurizer, [k for k in kinds if k.entity == "target"]))
    return views
