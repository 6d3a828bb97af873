import pytest
import torch

from lts.model import LTSModel

from conftest import tiny_model_config


def _inputs(b=2, size=64, vocab=20, max_len=6):
    tokens = torch.randint(2, vocab, (b, max_len))
    lengths = torch.tensor([max_len, 3][:b])
    tokens[1, 3:] = 0
    return torch.rand(b, 3, size, size), tokens, lengths


@pytest.mark.parametrize("mode", ["filter", "transformer", "none"])
def test_forward_shapes(mode):
    model = LTSModel(20, tiny_model_config(mode)).eval()
    with torch.no_grad():
        out = model(*_inputs())
    assert out.prior.logits.shape == (2, 8, 8)
    assert out.mask.logits.shape == (2, 16, 16)
    assert out.cross.f_m3.shape == (2, 8, 8, 8)
    assert torch.isfinite(out.mask.logits).all()


def test_all_parameters_receive_gradient():
    model = LTSModel(20, tiny_model_config())
    out = model(*_inputs())
    (out.mask.logits.mean() + out.prior.logits.mean()).backward()
    # embedding rows of unused tokens legitimately get no gradient
    missing = [n for n, p in model.named_parameters() if p.grad is None]
    assert missing == []


def test_expression_changes_prediction():
    model = LTSModel(20, tiny_model_config()).eval()
    images, tokens, lengths = _inputs()
    other = tokens.clone()
    other[:, 0] = (other[:, 0] + 1) % 18 + 2
    with torch.no_grad():
        a = model(images, tokens, lengths).mask.logits
        b = model(images, other, lengths).mask.logits
    assert not torch.allclose(a, b)
