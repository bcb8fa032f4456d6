"""Batching, the training loop, evaluation and single-file inference.

Reference mode is single-threaded and fully deterministic: given the same
samples, config and seed, two runs produce byte-identical checkpoints and
metrics. All randomness is derived from the run seed through fixed streams
(weight init, the train/eval split, one shuffle per epoch) plus
counter-based dropout masks keyed on (seed, layer, step), so a run resumed
from a checkpoint replays exactly.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ctc, dsp
from .dsp import FeatureConfig, FeatureNorm
from .ipa import INVENTORY, PhonemeSeq, render_ipa
from .nn import AdamW, ModelConfig, TranscriptionModel, load_checkpoint, save_checkpoint


class InsufficientSamplesError(ValueError):
    pass


class NumericError(RuntimeError):
    pass


class StageError(RuntimeError):
    """An inference stage failed; the original error is the ``__cause__``."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        super().__init__(f"stage {stage!r}: {cause}")


@dataclass
class FeaturizedSample:
    word: str
    audio_filename: str
    label: list[int]
    features: np.ndarray  # (T, C), unstandardized


@dataclass
class TrainConfig:
    batch_size: int = 20
    epochs: int = 10
    eval_batches: int = 39
    seed: int = 0
    lr: float = 1e-4
    weight_decay: float = 0.01
    model: ModelConfig = field(default_factory=ModelConfig)
    norm: FeatureNorm = field(default_factory=lambda: dsp.DEFAULT_NORM)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    stop_at_eval_accuracy: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "model" in d:
            d["model"] = ModelConfig(**d["model"])
        if "norm" in d:
            d["norm"] = FeatureNorm(**d["norm"])
        if "features" in d:
            d["features"] = FeatureConfig(**d["features"])
        return cls(**d)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    eval_loss: float
    eval_accuracy: float

    def to_json_line(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class RunMetrics:
    epochs: list[EpochMetrics] = field(default_factory=list)
    wall_time_seconds: float = 0.0


@dataclass
class Checkpoint:
    """Everything needed to rebuild the model (and to resume training)."""

    config: TrainConfig
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray]
    optimizer: dict[str, np.ndarray] | None = None
    optimizer_t: int = 0
    epoch: int = 0
    step: int = 0

    def save(self, path: str | Path) -> None:
        meta = {
            "train_config": self.config.to_dict(),
            "blank_id": self.config.model.output_classes - 1,
            "progress": {
                "epoch": self.epoch,
                "step": self.step,
                "optimizer_t": self.optimizer_t,
            },
            "has_optimizer": self.optimizer is not None,
        }
        arrays = {f"param/{k}": v for k, v in self.params.items()}
        arrays.update({f"buffer/{k}": v for k, v in self.buffers.items()})
        if self.optimizer is not None:
            arrays.update({f"opt/{k}": v for k, v in self.optimizer.items()})
        save_checkpoint(path, meta, arrays)

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        meta, arrays = load_checkpoint(path)
        config = TrainConfig.from_dict(meta["train_config"])
        params = {k[len("param/"):]: v for k, v in arrays.items()
                  if k.startswith("param/")}
        buffers = {k[len("buffer/"):]: v for k, v in arrays.items()
                   if k.startswith("buffer/")}
        optimizer = {k[len("opt/"):]: v for k, v in arrays.items()
                     if k.startswith("opt/")} or None
        progress = meta.get("progress", {})
        return cls(
            config=config,
            params=params,
            buffers=buffers,
            optimizer=optimizer,
            optimizer_t=progress.get("optimizer_t", 0),
            epoch=progress.get("epoch", 0),
            step=progress.get("step", 0),
        )

    def build_model(self) -> TranscriptionModel:
        model = TranscriptionModel(self.config.model)
        model.load_arrays(self.params, self.buffers)
        model.dropout_seed = self.config.seed
        return model


def _rng(*entropy: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _chunk(samples: list, size: int) -> list[list]:
    """Fixed-size batches; a trailing remainder shorter than ``size`` is dropped."""
    return [samples[i * size:(i + 1) * size] for i in range(len(samples) // size)]


def _split(samples: Sequence[FeaturizedSample], config: TrainConfig):
    """Seeded shuffle, then carve the eval split off the end."""
    n_eval = config.eval_batches * config.batch_size
    if len(samples) < n_eval + config.batch_size:
        raise InsufficientSamplesError(
            f"{len(samples)} samples cannot fill {config.eval_batches} eval "
            f"batches plus one train batch of {config.batch_size}"
        )
    order = _rng(config.seed, 1).permutation(len(samples))
    shuffled = [samples[i] for i in order]
    return shuffled[:-n_eval], shuffled[-n_eval:]


def split_and_batch(
    samples: Sequence[FeaturizedSample], config: TrainConfig
) -> tuple[list[list[FeaturizedSample]], list[list[FeaturizedSample]]]:
    """Shuffled fixed-size batches for training plus the eval split.

    The last ``eval_batches * batch_size`` shuffled samples become the eval
    batches; the rest batch up for training with any short remainder
    dropped, so every batch holds exactly ``batch_size`` samples.
    """
    train_split, eval_split = _split(samples, config)
    return _chunk(train_split, config.batch_size), _chunk(eval_split,
                                                          config.batch_size)


def _stack_standardized(batch, norm: FeatureNorm, dtype) -> np.ndarray:
    mats = [dsp.standardize(s.features, norm).astype(dtype) for s in batch]
    return np.stack(mats)


def _ctc_batch(logits: np.ndarray, labels: list[list[int]]):
    """Mean CTC loss over the batch and the gradient w.r.t. the logits."""
    batch_size = logits.shape[0]
    dlogits = np.empty(logits.shape, dtype=np.float64)
    total = 0.0
    for b in range(batch_size):
        logp = ctc.log_softmax(logits[b].astype(np.float64))
        loss, dlogp = ctc.ctc_loss(logp, labels[b])
        dlogits[b] = ctc.log_softmax_backward(dlogp, logp) / batch_size
        total += loss
    return total / batch_size, dlogits.astype(logits.dtype)


def _eval_pass(model, eval_batches, norm):
    losses = []
    correct = 0
    total = 0
    for batch in eval_batches:
        x = _stack_standardized(batch, norm, model.dtype)
        logits = model.forward(x, train=False)
        for b, sample in enumerate(batch):
            logp = ctc.log_softmax(logits[b].astype(np.float64))
            loss, _ = ctc.ctc_loss(logp, sample.label)
            losses.append(loss)
            total += 1
            correct += ctc.greedy_decode(logp) == sample.label
    return float(np.mean(losses)), correct / total


def train_run(
    samples: Sequence[FeaturizedSample],
    config: TrainConfig,
    run_dir: str | Path | None = None,
    resume_from: Checkpoint | None = None,
    on_epoch=None,
) -> tuple[Checkpoint, RunMetrics]:
    """Train for ``config.epochs`` epochs and return the final state.

    Each epoch reshuffles the train split (stream keyed on (seed, epoch)),
    then runs forward / CTC / backward / AdamW per batch and evaluates on
    the fixed eval split. When ``run_dir`` is given, writes ``config.json``,
    one ``metrics.jsonl`` line per epoch and ``epoch_<n>.phck`` files.
    A non-finite loss aborts with a NumericError naming epoch and batch.
    """
    started = time.perf_counter()
    train_split, eval_split = _split(samples, config)
    eval_batches = _chunk(eval_split, config.batch_size)

    model = TranscriptionModel(config.model, rng=_rng(config.seed, 0))
    model.dropout_seed = config.seed
    optimizer = AdamW(model.parameters(), lr=config.lr,
                      weight_decay=config.weight_decay)

    start_epoch = 0
    step = 0
    if resume_from is not None:
        model.load_arrays(resume_from.params, resume_from.buffers)
        if resume_from.optimizer is not None:
            optimizer.load_state(resume_from.optimizer, resume_from.optimizer_t)
        start_epoch = resume_from.epoch
        step = resume_from.step

    run_path: Path | None = None
    metrics_file = None
    if run_dir is not None:
        run_path = Path(run_dir)
        run_path.mkdir(parents=True, exist_ok=True)
        with open(run_path / "config.json", "w", encoding="utf-8") as f:
            json.dump(config.to_dict(), f, sort_keys=True, indent=2)
        mode = "a" if resume_from is not None else "w"
        metrics_file = open(run_path / "metrics.jsonl", mode, encoding="utf-8")

    def snapshot(epoch: int) -> Checkpoint:
        return Checkpoint(
            config=config,
            params={k: v.copy() for k, v in model.parameters().items()},
            buffers={k: v.copy() for k, v in model.buffers().items()},
            optimizer={k: v.copy() for k, v in optimizer.state_arrays().items()},
            optimizer_t=optimizer.t,
            epoch=epoch,
            step=step,
        )

    metrics = RunMetrics()
    checkpoint = snapshot(start_epoch)
    if run_path is not None and config.epochs == 0:
        checkpoint.save(run_path / "epoch_0.phck")

    try:
        for epoch in range(start_epoch, config.epochs):
            order = _rng(config.seed, 2, epoch).permutation(len(train_split))
            batches = _chunk([train_split[i] for i in order], config.batch_size)
            epoch_loss = 0.0
            for index, batch in enumerate(batches):
                x = _stack_standardized(batch, config.norm, model.dtype)
                logits = model.forward(x, train=True, step=step)
                if not np.isfinite(logits).all():
                    raise NumericError(
                        f"non-finite logits at epoch {epoch + 1}, "
                        f"batch {index + 1}"
                    )
                loss, dlogits = _ctc_batch(logits, [s.label for s in batch])
                if not np.isfinite(loss):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch + 1}, batch {index + 1}"
                    )
                model.backward(dlogits)
                optimizer.step(model.gradients())
                step += 1
                epoch_loss += loss

            eval_loss, eval_accuracy = _eval_pass(model, eval_batches, config.norm)
            entry = EpochMetrics(
                epoch=epoch + 1,
                train_loss=epoch_loss / max(len(batches), 1),
                eval_loss=eval_loss,
                eval_accuracy=eval_accuracy,
            )
            metrics.epochs.append(entry)
            checkpoint = snapshot(epoch + 1)
            if run_path is not None:
                checkpoint.save(run_path / f"epoch_{epoch + 1}.phck")
                metrics_file.write(entry.to_json_line() + "\n")
                metrics_file.flush()
            if on_epoch is not None:
                on_epoch(entry)
            if (config.stop_at_eval_accuracy is not None
                    and eval_accuracy >= config.stop_at_eval_accuracy):
                break
    finally:
        if metrics_file is not None:
            metrics_file.close()

    metrics.wall_time_seconds = time.perf_counter() - started
    return checkpoint, metrics


def predict_ids(model: TranscriptionModel, features: np.ndarray,
                norm: FeatureNorm) -> list[int]:
    """Eval-mode decode of one unstandardized (T, C) feature matrix."""
    x = dsp.standardize(features, norm).astype(model.dtype)
    logits = model.forward_single(x)
    return ctc.greedy_decode(ctc.log_softmax(logits.astype(np.float64)))


def evaluate_exact(checkpoint: Checkpoint,
                   samples: Sequence[FeaturizedSample]) -> float:
    """Fraction of samples whose decoded sequence equals the target exactly."""
    model = checkpoint.build_model()
    norm = checkpoint.config.norm
    hits = sum(predict_ids(model, s.features, norm) == s.label for s in samples)
    return hits / len(samples) if samples else 0.0


def infer(checkpoint: Checkpoint, wav_path: str | Path) -> tuple[PhonemeSeq, str]:
    """WAV file -> (phoneme sequence, rendered IPA).

    Runs decode, resample, fix_length, mfcc, standardize, the eval-mode
    network and the greedy decoder; any failure is re-raised as a
    StageError naming the stage.
    """
    feature_config = checkpoint.config.features
    try:
        clip = dsp.decode_wav(Path(wav_path).read_bytes())
    except Exception as e:
        raise StageError("decode_wav", e) from e
    try:
        clip = dsp.resample(clip, feature_config.sample_rate)
    except Exception as e:
        raise StageError("resample", e) from e
    try:
        clip = dsp.fix_length(clip, feature_config.clip_seconds)
    except Exception as e:
        raise StageError("fix_length", e) from e
    try:
        features = dsp.mfcc(clip, feature_config)
    except Exception as e:
        raise StageError("mfcc", e) from e
    try:
        x = dsp.standardize(features, checkpoint.config.norm)
    except Exception as e:
        raise StageError("standardize", e) from e
    try:
        model = checkpoint.build_model()
        logits = model.forward_single(x.astype(model.dtype))
    except Exception as e:
        raise StageError("model_forward", e) from e
    try:
        ids = ctc.greedy_decode(ctc.log_softmax(logits.astype(np.float64)))
    except Exception as e:
        raise StageError("greedy_decode", e) from e
    seq = [INVENTORY[i] for i in ids]
    return seq, render_ipa(seq)
