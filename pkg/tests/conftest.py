import numpy as np
import pytest

from splicegan import forge
from splicegan.core import ForgeryMask, ImageMaskPair, ImageRGB, SizeClass

TINY_SCALE = 0.05  # 8 small / 2 medium / 2 large / 6 pristine

# acceptance verdicts, echoed in the terminal summary: (number, passed, detail)
CRITERIA: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(CRITERIA):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def sprites():
    return forge.make_sprites(6, seed=3)


@pytest.fixture(scope="session")
def bases():
    return forge.make_bases(forge.bases_needed(TINY_SCALE), seed=3)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory, bases, sprites):
    out = tmp_path_factory.mktemp("corpus")
    manifest = forge.synthesize_corpus(bases, sprites, seed=3, out_dir=out, scale=TINY_SCALE)
    manifest = forge.build_splits(manifest, seed=3)
    manifest.save(out / "manifest.json")
    return forge.DatasetManifest.load(out / "manifest.json")


@pytest.fixture
def flat_base():
    return ImageRGB(np.full((650, 650, 3), 90, dtype=np.uint8))


def opaque_sprite(size, category="block"):
    rgba = np.zeros((size, size, 4), dtype=np.uint8)
    rgba[..., :3] = 230
    rgba[..., 3] = 255
    return forge.SpriteAsset(rgba, category)


def block_pair(x, y, size, id="block"):
    mask = np.zeros((650, 650), dtype=np.uint8)
    mask[y : y + size, x : x + size] = 255
    image = np.zeros((650, 650, 3), dtype=np.uint8)
    return ImageMaskPair(id, ImageRGB(image), ForgeryMask(mask), SizeClass.from_size(size))


def overfit_pairs(manifest):
    """Three small forgeries and one pristine image from the train split.

    Distinct origins come first; when a tiny corpus has too few, further
    variants of already chosen origins fill the quota.
    """
    records = []
    for wanted, n in ((SizeClass.SMALL, 3), (SizeClass.PRISTINE, 1)):
        seen, firsts, rest = set(), [], []
        for r in manifest.split("train"):
            if r.size_class is wanted:
                (rest if r.origin in seen else firsts).append(r)
                seen.add(r.origin)
        records += (firsts + rest)[:n]
    return [manifest.load_pair(r) for r in records]


@pytest.fixture(scope="session")
def overfit_run(tiny_corpus, tmp_path_factory):
    """The documented overfit harness: 200 steps on 4 pairs, BCE, lambda 100, tiny preset."""
    from splicegan import training

    out = tmp_path_factory.mktemp("overfit")
    pairs = overfit_pairs(tiny_corpus)
    result = training.overfit(pairs, steps=200, losses_csv=out / "losses.csv")
    result.state.checkpoint().save(out / "overfit.spgc")
    return pairs, result, out
