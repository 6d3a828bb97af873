"""Acceptance suite: one test per criterion, each recording a pass/fail line.

Criteria 7 and 8 train the desk preset three times on the synthetic
benchmark; expect them to dominate the runtime of the whole suite.
"""

import math
import time

import numpy as np
import pytest
import torch

from lts.backbone import Backbone
from lts.config import preset, resolve
from lts.data import SynthConfig, generate_synthetic
from lts.data.dataset import ImageSample, load_jsonl, write_jsonl
from lts.data.masks import rle_decode, rle_encode
from lts.data.vocab import build_vocab
from lts.evaluation import SampleRecord, aggregate, binarize, evaluate, intersection_union
from lts.localization import LocalizationConfig, TransformerLocator, relevance_filter
from lts.model import LTSModel
from lts.objective import bce, lr_at, total_loss
from lts.training import Checkpoint, load_checkpoint, save_checkpoint, train

from conftest import ACCEPTANCE_LINES, tiny_model_config

LEARN_SEED = 7
LEARN_TRAIN, LEARN_VAL = 2000, 200
LEARN_RESOLUTION = 224
MIN_MEAN_IOU = 0.70
MIN_LOC = 0.90
MIN_ABLATION_GAP = 0.02


def record(number, ok, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])
    assert ok, detail


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def test_c01_metric_oracle():
    rng = np.random.default_rng(101)
    ok = True
    with Timer() as t:
        records, inter_tot, union_tot, ious = [], 0, 0, []
        for i in range(200):
            gt = rng.random((32, 32)) < rng.uniform(0.05, 0.6)
            gt[rng.integers(32), rng.integers(32)] = True
            pred = rng.random((32, 32)) < rng.uniform(0.0, 0.8)
            inter = union = 0
            for y in range(32):
                for x in range(32):
                    a, b = bool(pred[y, x]), bool(gt[y, x])
                    inter += a and b
                    union += a or b
            got = intersection_union(pred, gt)
            ok &= got == (inter, union)
            inter_tot += inter
            union_tot += union
            ious.append(inter / union)
            records.append(SampleRecord(i, "", got[0] / got[1], *got, False))
        stats = aggregate(records)
        ok &= stats["overall_iou"] == inter_tot / union_tot
        for g, v in stats["prec"].items():
            ok &= v == sum(1 for x in ious if x > g) / len(ious)
    ok &= t.seconds < 5
    record(1, ok, f"200 pairs, integer counts exact, cumulative IoU {stats['overall_iou']:.4f}, {t.seconds:.2f}s")


def test_c02_filter_equivalence():
    rng = np.random.default_rng(102)
    worst = 0.0
    with Timer() as t:
        for _ in range(50):
            c, h, w = int(rng.integers(1, 65)), int(rng.integers(1, 17)), int(rng.integers(1, 17))
            feats = torch.from_numpy(rng.standard_normal((1, c, h, w))).float()
            kernel = torch.from_numpy(rng.standard_normal((1, c))).float()
            got = relevance_filter(kernel, feats)[0].numpy()
            f, k = feats[0].double().numpy(), kernel[0].double().numpy()
            for i in range(h):
                for j in range(w):
                    expected = sum(k[ch] * f[ch, i, j] for ch in range(c))
                    worst = max(worst, abs(got[i, j] - expected))
    ok = worst <= 1e-5 and t.seconds < 5
    record(2, ok, f"50 instances up to 16x16x64, max abs error {worst:.2e}, {t.seconds:.2f}s")


def test_c03_gradient_fidelity():
    rng = np.random.default_rng(103)
    cfg = preset("paper").train
    assert cfg.loc_weight == 0.1
    worst = 0.0
    h = 1e-6
    with Timer() as t:
        for _ in range(20):
            gt = torch.from_numpy(rng.random((1, 64, 64)) < 0.3).double()
            mask = torch.from_numpy(rng.standard_normal((1, 16, 16)) * 2).requires_grad_(True)
            prior = torch.from_numpy(rng.standard_normal((1, 8, 8)) * 2).requires_grad_(True)
            total_loss(mask, prior, gt, cfg).total.backward()
            for param in (mask, prior):
                analytic = param.grad.numpy().ravel()
                base = param.detach().clone()
                for idx in range(base.numel()):
                    def f(delta):
                        bumped = base.clone().view(-1)
                        bumped[idx] += delta
                        args = (bumped.view_as(base), prior.detach()) if param is mask else (mask.detach(), bumped.view_as(base))
                        return total_loss(*args, gt, cfg).total.item()
                    numeric = (f(h) - f(-h)) / (2 * h)
                    rel = abs(analytic[idx] - numeric) / max(abs(numeric), 1e-12)
                    worst = max(worst, rel)
    ok = worst <= 1e-3 and t.seconds < 30
    record(3, ok, f"20 instances (8x8 prior, 16x16 mask), max relative error {worst:.2e}, {t.seconds:.2f}s")


def test_c04_shape_contracts():
    cfg = preset("desk").model
    vocab = 10
    ok = True
    details = []
    with Timer() as t:
        model = LTSModel(vocab, cfg).eval()
        backbone = Backbone(cfg.backbone).eval()
        tokens, lengths = torch.tensor([[2, 3, 0]]), torch.tensor([2])
        with torch.no_grad():
            pyr = backbone(torch.rand(1, 3, 416, 416))
            ok &= [p.shape[-1] for p in (pyr.f_v1, pyr.f_v2, pyr.f_v3)] == [13, 26, 52]
            for res in (320, 352, 384, 416, 448, 480):
                out = model(torch.rand(1, 3, res, res), tokens, lengths)
                good = out.prior.logits.shape == (1, res // 8, res // 8) and \
                    out.mask.logits.shape == (1, res // 4, res // 4)
                ok &= good
                details.append(f"{res}->{res // 8}/{res // 4}")
            for bad in (330, 400):
                try:
                    model(torch.rand(1, 3, bad, bad), tokens, lengths)
                    ok = False
                except ValueError:
                    pass
    ok &= t.seconds < 30
    record(4, ok, f"pyramid 13/26/52 at 416; prior/mask {' '.join(details)}; {t.seconds:.2f}s")


def test_c05_transformer_properties():
    torch.manual_seed(105)
    cfg = LocalizationConfig(mode="transformer", tf_heads=4, tf_hidden=32)
    with Timer() as t:
        f = torch.randn(1, 16, 7, 7, dtype=torch.float64)
        txt = torch.randn(1, 12, dtype=torch.float64)
        off = TransformerLocator(16, 12, cfg).double().eval()
        on = TransformerLocator(16, 12, cfg).double().eval()
        on.load_state_dict(off.state_dict())
        worst_off, diffs_on = 0.0, []
        with torch.no_grad():
            base_off = off(f, txt, use_pos=False).reshape(-1)
            base_on = on(f, txt, use_pos=True).reshape(-1)
            for _ in range(10):
                perm = torch.randperm(49)
                permuted = f.flatten(2)[..., perm].reshape_as(f)
                worst_off = max(worst_off, (off(permuted, txt, use_pos=False).reshape(-1) - base_off[perm]).abs().max().item())
                diffs_on.append((on(permuted, txt, use_pos=True).reshape(-1) - base_on[perm]).abs().max().item())
    violated = sum(d > 1e-3 for d in diffs_on)
    ok = worst_off <= 1e-5 and violated >= 1 and t.seconds < 30
    record(5, ok, f"equivariance error {worst_off:.1e} without encodings; {violated}/10 permutations differ with them; {t.seconds:.2f}s")


def test_c06_loss_analytics():
    rng = np.random.default_rng(106)
    with Timer() as t:
        errs = []
        for _ in range(20):
            target = torch.from_numpy(rng.integers(0, 2, size=(13, 13))).double()
            errs.append(abs(bce(torch.full((13, 13), 0.5, dtype=torch.float64), target).item() - math.log(2)))
        target = torch.from_numpy(rng.integers(0, 2, size=(13, 13))).double()
        perfect = bce(target.clone(), target).item()
        cfg = preset("paper").train
        lr29, lr30 = lr_at(29, cfg), lr_at(30, cfg)
    ok = max(errs) <= 1e-9 and perfect <= 1e-6 and lr29 == 1e-3 and math.isclose(lr30, 1e-4, rel_tol=1e-12)
    ok &= t.seconds < 5
    record(6, ok, f"|bce(0.5)-ln2| {max(errs):.1e}, perfect {perfect:.1e}, lr(29)={lr29:g} lr(30)={lr30:g}")


@pytest.fixture(scope="session")
def learnability():
    train_set = generate_synthetic(SynthConfig(n=LEARN_TRAIN, image_size=LEARN_RESOLUTION, seed=LEARN_SEED))
    val_set = generate_synthetic(SynthConfig(n=LEARN_VAL, image_size=LEARN_RESOLUTION, seed=LEARN_SEED,
                                             start_index=LEARN_TRAIN))
    results = {}
    for name, ablate in (("full", []), ("no-seg", ["seg"]), ("no-filter", ["filter"])):
        cfg = resolve("desk", flags={"seed": LEARN_SEED, "resolution": LEARN_RESOLUTION, "ablate": ablate}, environ={})
        with Timer() as t:
            res = train(cfg, train_set, val_set)
        best = max(res.history, key=lambda row: row["val_IoU"])
        results[name] = {"best": best, "seconds": t.seconds, "epochs": len(res.history), "config": cfg}
    return results


def test_c07_learnability(learnability):
    full = learnability["full"]
    best = full["best"]
    cfg = full["config"]
    ok = (best["val_IoU"] >= MIN_MEAN_IOU and best["val_loc"] >= MIN_LOC and full["epochs"] <= 30
          and cfg.model.localization.mode == "filter" and cfg.model.localization.n_filters == 1
          and cfg.train.loc_weight == 0.1 and full["seconds"] <= 45 * 60)
    record(7, ok, f"best epoch {best['epoch']}: mean IoU {best['val_IoU']:.4f} (>= {MIN_MEAN_IOU}), "
                  f"loc {best['val_loc']:.3f} (>= {MIN_LOC}), {full['epochs']} epochs in {full['seconds'] / 60:.1f} min")


def test_c08_ablation_direction(learnability):
    full = learnability["full"]["best"]["val_IoU"]
    no_seg = learnability["no-seg"]["best"]["val_IoU"]
    no_filter = learnability["no-filter"]["best"]["val_IoU"]
    ablation_time = learnability["no-seg"]["seconds"] + learnability["no-filter"]["seconds"]
    ok = (full - no_seg >= MIN_ABLATION_GAP and full - no_filter >= MIN_ABLATION_GAP
          and ablation_time <= 3 * learnability["full"]["seconds"])
    record(8, ok, f"mean IoU full {full:.4f}, no-seg {no_seg:.4f} (gap {full - no_seg:+.4f}), "
                  f"no-filter {no_filter:.4f} (gap {full - no_filter:+.4f}), ablations {ablation_time / 60:.1f} min")


def _tiny_samples(n, size=64):
    rng = np.random.default_rng(109)
    out = []
    for i in range(n):
        mask = np.zeros((size, size), np.uint8)
        y, x = rng.integers(0, size - 20, size=2)
        mask[y:y + 20, x:x + 20] = 1
        out.append(ImageSample(rng.random((size, size, 3), dtype=np.float32), f"the shape {i % 3}", mask))
    return out


def test_c09_inference_contract(tmp_path):
    cases = {0.2: 0, 0.25: 0, 0.3: 1}
    ok = all(int(binarize(np.array(p))) == v for p, v in cases.items())
    ok &= all(int(binarize(torch.tensor(p))) == v for p, v in cases.items())
    samples = _tiny_samples(12)
    vocab = build_vocab([s.expression for s in samples])
    model = LTSModel(len(vocab), tiny_model_config())
    path = save_checkpoint(Checkpoint({"model": {}}, vocab.tokens, model.state_dict()), tmp_path / "fixed.pt")
    reports = []
    for _ in range(2):
        ckpt = load_checkpoint(path)
        m = LTSModel(len(vocab), tiny_model_config())
        m.load_state_dict(ckpt.model_state)
        reports.append(evaluate(m, samples, ckpt.vocabulary(), 6, batch_size=5).to_dict())
    ok &= reports[0] == reports[1]
    record(9, ok, f"binarize {cases} and identical reports on a fixed checkpoint "
                  f"(mean IoU {reports[0]['mean_iou']:.4f})")


def test_c10_round_trips(tmp_path):
    with Timer() as t:
        cfg = resolve("desk", flags={"train": {"epochs": 2, "lr_decay_epoch": 1}, "resolution": 64,
                                     "model": {"text": {"hidden_dim": 8}}}, environ={})
        samples = generate_synthetic(SynthConfig(n=12, image_size=64, seed=110))
        result = train(cfg, samples[:8], samples[8:], max_epochs=1)
        first = save_checkpoint(result.last, tmp_path / "a" / "model.pt")
        second = save_checkpoint(load_checkpoint(first), tmp_path / "b" / "model.pt")
        ckpt_ok = first.read_bytes() == second.read_bytes()

        index = write_jsonl(samples, tmp_path / "data")
        loaded = load_jsonl(index)
        jsonl_ok = len(loaded) == len(samples) and all(
            a.expression == b.expression and np.array_equal(a.gt_mask, b.gt_mask)
            and np.array_equal(np.rint(a.image * 255), np.rint(b.image * 255))
            for a, b in zip(samples, loaded))

        rng = np.random.default_rng(1010)
        rle_ok = True
        for _ in range(100):
            h, w = rng.integers(1, 40, size=2)
            mask = (rng.random((h, w)) < rng.uniform(0, 1)).astype(np.uint8)
            rle = rle_encode(mask)
            rle_ok &= np.array_equal(rle_decode(rle), mask) and rle_encode(rle_decode(rle)) == rle
    ok = ckpt_ok and jsonl_ok and rle_ok and t.seconds < 30
    record(10, ok, f"checkpoint bytes {'identical' if ckpt_ok else 'DIFFER'}, JSONL identity {jsonl_ok}, "
                   f"RLE x100 {rle_ok}, {t.seconds:.2f}s")
