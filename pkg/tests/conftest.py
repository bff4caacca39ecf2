"""Session fixtures: the shared toy corpus and the trained model.

Generating the corpus takes seconds; training takes minutes, so both are
built once per session and shared by every test that asks for them.
"""

import time

import pytest

from prosohmm.audio import MelConfig
from prosohmm.corpus import STANDARDIZER_NAME, VOCABULARY_NAME, Vocabulary, read_manifest
from prosohmm.harness import ToyCorpusConfig, generate_toy_corpus, load_training_examples
from prosohmm.model import ModelConfig, TrainConfig, init_model, save_checkpoint, train

# one corpus and one training recipe shared by the acceptance suite; the
# wide pitch span puts the low end of the pitch control into the sub-70 Hz
# creak region so creak styles are reachable by the trained model
TOY_CORPUS_CONFIG = ToyCorpusConfig(n_utterances=100, seed=1, pitch_span=0.35)
TOY_MEL_CONFIG = MelConfig()
TOY_TRAIN_CONFIG = TrainConfig(iterations=500, learning_rate=0.3, batch_size=16, seed=1)


def make_model_config(vocab_size: int) -> ModelConfig:
    return ModelConfig(vocab_size=vocab_size, seed=1)


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy_corpus")
    manifest_path, standardizer = generate_toy_corpus(TOY_CORPUS_CONFIG, out)
    vocabulary = Vocabulary.from_json(
        (out / VOCABULARY_NAME).read_text(encoding="utf-8")
    )
    return {
        "dir": out,
        "manifest": manifest_path,
        "standardizer": standardizer,
        "vocabulary": vocabulary,
        "records": read_manifest(manifest_path),
    }


@pytest.fixture(scope="session")
def toy_examples(toy_corpus):
    return load_training_examples(
        toy_corpus["manifest"], toy_corpus["vocabulary"], TOY_MEL_CONFIG
    )


@pytest.fixture(scope="session")
def trained_toy_model(toy_corpus, toy_examples):
    model = init_model(make_model_config(len(toy_corpus["vocabulary"])))
    t0 = time.monotonic()
    trained, trace = train(model, toy_examples, TOY_TRAIN_CONFIG)
    seconds = time.monotonic() - t0
    return {"model": trained, "trace": trace, "init": model, "train_seconds": seconds}


@pytest.fixture(scope="session")
def trained_ckpt(trained_toy_model, toy_corpus, tmp_path_factory):
    """The session model saved to disk, for tests that drive the CLI."""
    out = tmp_path_factory.mktemp("session_ckpt")
    path = out / "model.ckpt"
    save_checkpoint(trained_toy_model["model"], path)
    return {
        "checkpoint": path,
        "vocabulary": toy_corpus["dir"] / VOCABULARY_NAME,
        "standardizer": toy_corpus["dir"] / STANDARDIZER_NAME,
    }
