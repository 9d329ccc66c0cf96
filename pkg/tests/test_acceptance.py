"""End-to-end acceptance criteria, one test per criterion.

Each test records a one-line verdict that is printed in the pytest terminal
summary (and echoed to stdout) before asserting.
"""
import json

import numpy as np
import pytest
import torch

from conftest import CRITERIA
from oracles import receptive_field_by_probe
from splicegan import evaluation, forge, inference, models, training
from splicegan.core import SizeClass, SoftMask
from splicegan.losses import LossConfig
from test_evaluation import metric_oracle_trials
from test_losses import gradient_trials

DESK_SCALE = 0.25
DESK_SEED = 7
DESK_EPOCHS = 50
PAPER_LOCALIZATION_AUC = {"bce": 0.988, "l1": 0.927}


def verdict(number, passed, detail):
    CRITERIA.append((number, bool(passed), detail))
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    return passed


# ---------------------------------------------------------------- 1


def test_criterion_1_structure():
    dspec = models.DiscriminatorSpec()
    rf = models.receptive_field(dspec)
    probe = receptive_field_by_probe(dspec.kernels, dspec.strides)
    g = models.build_model(models.GeneratorSpec())
    spec = g.spec
    channels_ok = all(
        stage.conv.in_channels == (spec.encoder_widths[7] if i == 1
                                   else spec.decoder_widths[i - 2] + spec.encoder_widths[8 - (i - 1) - 1])
        for i, stage in enumerate(g.decoder, start=1)
    )
    ok = rf == 70 == probe and len(g.encoder) == 8 and len(g.decoder) == 8 and channels_ok
    verdict(1, ok, f"receptive field {rf} (probe {probe}); stages {len(g.encoder)}+{len(g.decoder)}; "
                   f"skip channels {'consistent' if channels_ok else 'WRONG'}")
    assert ok


# ---------------------------------------------------------------- 2


def test_criterion_2_gradients():
    worst = gradient_trials(trials=100, seed=2024)
    peak = max(worst.values())
    ok = peak < 1e-5
    verdict(2, ok, "max relative error " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " (< 1e-5)")
    assert ok


# ---------------------------------------------------------------- 3


def test_criterion_3_metric_oracles():
    worst_auc, worst_ap = metric_oracle_trials(instances=500, seed=2024)
    ok = worst_auc < 1e-9 and worst_ap < 1e-9
    verdict(3, ok, f"500 instances: max |AUC - pairwise| {worst_auc:.1e}, max |AP - sweep| {worst_ap:.1e} (< 1e-9)")
    assert ok


# ---------------------------------------------------------------- 4


def test_criterion_4_detection_score_exact():
    cases = []
    block = np.zeros((650, 650), np.float32)
    block[200:328, 100:228] = 1.0
    cases.append((block, 255 * 16384 / 422500))
    cases.append((np.zeros((650, 650), np.float32), 0.0))
    cases.append((np.ones((650, 650), np.float32), 255.0))
    rng = np.random.default_rng(4)
    for _ in range(5):
        m = rng.integers(0, 2, (650, 650)).astype(np.float32)
        cases.append((m, 255 * int(m.sum(dtype=np.int64)) / m.size))
    mismatches = [expected - inference.detection_score(SoftMask(m)) for m, expected in cases]
    ok = all(d == 0 for d in mismatches)
    verdict(4, ok, f"{len(cases)} constructed masks exact; 128x128 block -> {inference.detection_score(SoftMask(block))!r}")
    assert ok


# ---------------------------------------------------------------- 5


def test_criterion_5_overfit(overfit_run):
    pairs, result, _ = overfit_run
    recon, agreement = result.final_recon, result.agreement
    ok = recon < 0.1 and agreement >= 0.99 and len(pairs) == 4
    verdict(5, ok, f"4 pairs, 200 steps: final L_R {recon:.4f} (< 0.1), pixel agreement {agreement:.4%} (>= 99%)")
    assert ok


# --------------------------------------------------------------- 6/7


@pytest.fixture(scope="module")
def desk_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    bases = forge.make_bases(forge.bases_needed(DESK_SCALE), DESK_SEED)
    sprites = forge.make_sprites(16, DESK_SEED)
    manifest = forge.synthesize_corpus(bases, sprites, DESK_SEED, out, scale=DESK_SCALE)
    manifest = forge.build_splits(manifest, DESK_SEED)
    manifest.save(out / "manifest.json")
    return forge.DatasetManifest.load(out / "manifest.json")


def _desk_run(manifest, out, mode):
    config = training.TrainConfig(epochs=DESK_EPOCHS, preset="tiny", loss=LossConfig(mode, 100.0),
                                  seed=DESK_SEED, checkpoint_every=10)
    result = training.train(config, manifest, out)
    report = evaluation.evaluate(result.best, manifest, "test")
    evaluation.write_report(out / "eval", report)
    return result, report


def _final_epoch_summary(result, manifest):
    """Context only: the last checkpoint, which validation selection may pass over."""
    final = evaluation.evaluate(result.checkpoints[-1], manifest, "test")
    return f"epoch {result.checkpoints[-1].epoch}: detection {final.detection.roc.auc:.4f}, " \
           f"localization {final.localization.roc.auc:.4f}"


@pytest.fixture(scope="module")
def desk_runs(desk_corpus, tmp_path_factory):
    runs = {}
    for mode in ("bce", "l1"):
        out = tmp_path_factory.mktemp(f"desk_{mode}")
        runs[mode] = (out, *_desk_run(desk_corpus, out, mode))
    return runs


def test_criterion_6_desk_experiment(desk_corpus, desk_runs):
    counts = desk_corpus.counts
    assert (counts["small"], counts["medium"], counts["large"], counts["pristine"]) == (40, 8, 8, 31)
    _, bce_result, bce = desk_runs["bce"]
    _, l1_result, l1 = desk_runs["l1"]
    det, loc = bce.detection.roc.auc, bce.localization.roc.auc
    val = bce_result.best.val_metric
    ok = det >= 0.95 and loc >= 0.90
    verdict(
        6, ok,
        f"BCE: detection AUC {det:.4f} (>= 0.95), localization AUC {loc:.4f} (>= 0.90), best val pixel AUC {val:.4f} "
        f"at epoch {bce_result.best.epoch}; localization BCE vs L1 {loc:.4f} vs {l1.localization.roc.auc:.4f} "
        f"(reference {PAPER_LOCALIZATION_AUC['bce']} vs {PAPER_LOCALIZATION_AUC['l1']}); "
        f"L1 detection AUC {l1.detection.roc.auc:.4f}; unselected final BCE model "
        f"{_final_epoch_summary(bce_result, desk_corpus)}",
    )
    assert val >= 0.9
    assert ok


def test_criterion_7_determinism(desk_corpus, desk_runs, overfit_run, tmp_path):
    bce_out = desk_runs["bce"][0]
    again = tmp_path / "bce_again"
    _desk_run(desk_corpus, again, "bce")
    desk_same = all((again / n).read_bytes() == (bce_out / n).read_bytes() for n in ("metrics.csv", "losses.csv"))
    summary_same = (again / "eval" / "summary.json").read_bytes() == (bce_out / "eval" / "summary.json").read_bytes()

    pairs, _, overfit_out = overfit_run
    training.overfit(pairs, steps=200, losses_csv=tmp_path / "overfit_losses.csv")
    overfit_same = (tmp_path / "overfit_losses.csv").read_bytes() == (overfit_out / "losses.csv").read_bytes()

    ok = desk_same and overfit_same and summary_same
    verdict(7, ok, f"desk metrics/losses CSVs identical: {desk_same}; eval summary identical: {summary_same}; "
                   f"overfit losses CSV identical: {overfit_same}")
    assert ok


# ---------------------------------------------------------------- 8


def test_criterion_8_generalization_protocol(desk_corpus):
    test_classes = {r.size_class for r in desk_corpus.split("test")}
    small_in_test = sum(r.size_class is SizeClass.SMALL for r in desk_corpus.split("test"))
    fit_classes = {r.size_class for s in ("train", "validation") for r in desk_corpus.split(s)}
    on_disk = json.loads((desk_corpus.root / "manifest.json").read_text())
    disk_small_in_test = sum(p["split"] == "test" and p["size_class"] == "small" for p in on_disk["pairs"])
    ok = (
        small_in_test == 0 == disk_small_in_test
        and test_classes == {SizeClass.MEDIUM, SizeClass.LARGE, SizeClass.PRISTINE}
        and fit_classes == {SizeClass.SMALL, SizeClass.PRISTINE}
    )
    verdict(8, ok, f"test split {desk_corpus.split_counts()['test']}; small forgeries in test: {small_in_test}")
    assert ok
