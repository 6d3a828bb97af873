"""Binarization, IoU bookkeeping, localization quality and reports."""

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from lts.data.batch import collate
from lts.errors import ConfigError, DataError, LTSError, ShapeError

THRESHOLD = 0.25
PREC_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)


def binarize(prob, threshold: float = THRESHOLD):
    """Strictly-greater thresholding; works on numpy arrays and tensors."""
    if isinstance(prob, torch.Tensor):
        return (prob > threshold).to(torch.uint8)
    return (np.asarray(prob) > threshold).astype(np.uint8)


def upsample_prob(mask_logits: torch.Tensor, size) -> torch.Tensor:
    """Bilinear upsampling of stride-4 probabilities to full resolution."""
    prob = torch.sigmoid(mask_logits)[:, None]
    return F.interpolate(prob, size=tuple(size), mode="bilinear", align_corners=False)[:, 0]


def intersection_union(pred, gt) -> tuple[int, int]:
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    if not gt.any():
        raise DataError("ground-truth mask is empty")
    return int(np.count_nonzero(pred & gt)), int(np.count_nonzero(pred | gt))


def iou(pred, gt) -> float:
    inter, union = intersection_union(pred, gt)
    return inter / union


def loc_quality(prior, gt_mask) -> bool:
    """Whether the first (row-major) argmax of a stride-8 prior lands on foreground.

    ``gt_mask`` may be given at full resolution; it is then downsampled by
    taking each 8x8 block's top-left pixel.
    """
    prior = np.asarray(prior.detach().cpu() if isinstance(prior, torch.Tensor) else prior)
    gt = np.asarray(gt_mask)
    if gt.shape != prior.shape:
        factor = gt.shape[0] // prior.shape[0]
        gt = gt[::factor, ::factor]
    if gt.shape != prior.shape:
        raise ShapeError(f"prior {prior.shape} and mask {gt.shape} are not aligned")
    flat = int(np.argmax(prior))
    return bool(gt.reshape(-1)[flat])


@dataclass
class SampleRecord:
    index: int
    expression: str
    iou: float
    intersection: int
    union: int
    loc_hit: bool


@dataclass
class EvalReport:
    overall_iou: float
    mean_iou: float
    prec: dict
    loc_quality: float
    n_samples: int
    n_failed: int = 0
    records: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self, with_records=True):
        out = asdict(self)
        out["prec"] = {f"{k:.1f}": v for k, v in self.prec.items()}
        if not with_records:
            out.pop("records")
        return out

    def to_json(self, with_records=True) -> str:
        return json.dumps(self.to_dict(with_records), indent=2, sort_keys=True)

    def format_table(self, label: str = "model") -> str:
        """Plain-text table with an IoU column followed by prec@X columns."""
        headers = ["", "IoU", "mIoU"] + [f"prec@{g:.1f}" for g in PREC_THRESHOLDS] + ["loc"]
        values = [label, self.overall_iou, self.mean_iou] + [self.prec[g] for g in PREC_THRESHOLDS]
        values.append(self.loc_quality)
        cells = [values[0]] + [f"{100 * v:.2f}" for v in values[1:]]
        widths = [max(len(h), len(c)) for h, c in zip(headers, cells)]
        line = lambda row: " | ".join(s.rjust(w) for s, w in zip(row, widths))  # noqa: E731
        rule = "-+-".join("-" * w for w in widths)
        return "\n".join([line(headers), rule, line(cells)])


def aggregate(records, thresholds=PREC_THRESHOLDS, loc_hits=None) -> dict:
    """Cumulative IoU, mean IoU and prec@X (IoU strictly above X)."""
    records = list(records)
    if not records:
        raise ConfigError("cannot aggregate an empty dataset")
    inter = sum(r.intersection for r in records)
    union = sum(r.union for r in records)
    ious = np.asarray([r.iou for r in records])
    hits = [r.loc_hit for r in records] if loc_hits is None else list(loc_hits)
    return {
        "overall_iou": inter / union,
        "mean_iou": float(ious.mean()),
        "prec": {g: float(np.mean(ious > g)) for g in thresholds},
        "loc_quality": float(np.mean(hits)),
    }


@torch.no_grad()
def predict(model, images, tokens, lengths):
    """Full-resolution probabilities and stride-8 priors for a batch."""
    model.eval()
    out = model(images, tokens, lengths)
    return upsample_prob(out.mask.logits, images.shape[-2:]), out.prior.prior


def evaluate(model, dataset, vocab, max_len: int, batch_size: int = 16, config=None) -> EvalReport:
    records = []
    failed = 0
    for start in range(0, len(dataset), batch_size):
        batch = dataset[start:start + batch_size]
        try:
            images, tokens, lengths, masks = collate(batch, vocab, max_len)
            prob, prior = predict(model, images, tokens, lengths)
        except LTSError:
            failed += len(batch)
            continue
        pred = binarize(prob).numpy()
        for k, sample in enumerate(batch):
            inter, union = intersection_union(pred[k], sample.gt_mask)
            records.append(SampleRecord(
                index=start + k,
                expression=sample.expression,
                iou=inter / union,
                intersection=inter,
                union=union,
                loc_hit=loc_quality(prior[k], sample.gt_mask),
            ))
    stats = aggregate(records)
    return EvalReport(
        n_samples=len(records),
        n_failed=failed,
        records=records,
        config=dict(config or {}),
        **stats,
    )
