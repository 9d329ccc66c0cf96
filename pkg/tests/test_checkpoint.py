import numpy as np
import pytest
import torch

from splicegan import inference, training
from splicegan.checkpoint import MAGIC, Checkpoint
from splicegan.errors import BadCheckpoint
from splicegan.losses import LossConfig


@pytest.fixture(scope="module")
def trained_state(tiny_corpus):
    config = training.TrainConfig(epochs=1, preset="tiny", loss=LossConfig("bce", 100.0), seed=2)
    state = training.TrainState.initialize(config)
    split = training.pairs_to_tensors([tiny_corpus.load_pair(r) for r in tiny_corpus.split("train")[:2]])
    training.train_step(state, split.images[:1], split.masks[:1])
    return state


def test_roundtrip_is_bit_exact(tmp_path, trained_state, bases):
    ckpt = trained_state.checkpoint({"val_metric": 0.5})
    ckpt.save(tmp_path / "c.spgc")
    loaded = Checkpoint.load(tmp_path / "c.spgc")
    assert loaded.epoch == ckpt.epoch
    assert loaded.config == ckpt.config and loaded.config_hash == ckpt.config_hash
    assert loaded.metrics == {"step": 1, "val_metric": 0.5}
    for a, b in ((ckpt.generator, loaded.generator), (ckpt.discriminator, loaded.discriminator)):
        assert list(a) == list(b)
        assert all(torch.equal(a[k], b[k]) for k in a)
    assert torch.equal(ckpt.rng_state, loaded.rng_state)
    for net in ("generator", "discriminator"):
        sa, sb = ckpt.optimizer[net]["state"], loaded.optimizer[net]["state"]
        assert sa.keys() == sb.keys()
        for index in sa:
            for slot in sa[index]:
                assert torch.equal(torch.as_tensor(sa[index][slot]), sb[index][slot])

    in_memory = inference.estimate_mask(trained_state.generator, bases[0]).data
    from_disk = inference.estimate_mask(tmp_path / "c.spgc", bases[0]).data
    assert np.array_equal(in_memory, from_disk)


def test_archive_layout(tmp_path, trained_state):
    trained_state.checkpoint().save(tmp_path / "c.spgc")
    raw = (tmp_path / "c.spgc").read_bytes()
    assert raw[:8] == MAGIC
    assert not (tmp_path / "c.spgc.tmp").exists()


def test_missing_checkpoint(tmp_path):
    with pytest.raises(BadCheckpoint):
        Checkpoint.load(tmp_path / "nope.spgc")


@pytest.mark.parametrize("payload", [b"", b"not a checkpoint at all, definitely", MAGIC + b"\x09\0\0\0" + b"\0" * 8])
def test_corrupt_checkpoint(tmp_path, payload):
    path = tmp_path / "bad.spgc"
    path.write_bytes(payload)
    with pytest.raises(BadCheckpoint):
        Checkpoint.load(path)


def test_truncated_checkpoint(tmp_path, trained_state):
    trained_state.checkpoint().save(tmp_path / "c.spgc")
    raw = (tmp_path / "c.spgc").read_bytes()
    (tmp_path / "t.spgc").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(BadCheckpoint):
        Checkpoint.load(tmp_path / "t.spgc")
