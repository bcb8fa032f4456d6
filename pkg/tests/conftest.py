import time

import pytest

from phonoscribe.nn import ModelConfig
from phonoscribe.training import TrainConfig, train_run

from synth import build_tone_corpus

# Reduced-model training setup for the synthetic-corpus gate; deterministic
# end to end (corpus synthesis, split, init, batch order).
OVERFIT_SEED = 7
OVERFIT_MAX_EPOCHS = 300


def overfit_config(norm, epochs=OVERFIT_MAX_EPOCHS, seed=OVERFIT_SEED,
                   stop_at=1.0):
    return TrainConfig(
        batch_size=8,
        epochs=epochs,
        eval_batches=1,
        seed=seed,
        lr=2.5e-3,
        model=ModelConfig(conv_units=32, lstm_units=64, lstm_dropout=0.0),
        norm=norm,
        stop_at_eval_accuracy=stop_at,
    )


@pytest.fixture(scope="session")
def tone_corpus():
    return build_tone_corpus(40)


@pytest.fixture(scope="session")
def overfit_run(tone_corpus):
    """One full training run on the synthetic corpus, shared by tests."""
    samples, norm = tone_corpus
    config = overfit_config(norm)
    started = time.perf_counter()
    checkpoint, metrics = train_run(samples, config)
    elapsed = time.perf_counter() - started
    return {
        "samples": samples,
        "norm": norm,
        "config": config,
        "checkpoint": checkpoint,
        "metrics": metrics,
        "elapsed": elapsed,
    }
