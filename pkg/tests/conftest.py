import pytest
import torch

from lts.backbone import BackboneConfig
from lts.fusion import FusionConfig
from lts.localization import LocalizationConfig
from lts.model import ModelConfig
from lts.segmentation import ASPPConfig
from lts.text_encoder import TextConfig


def tiny_model_config(mode="filter", **loc):
    return ModelConfig(
        text=TextConfig(embed_dim=12, hidden_dim=8, max_len=6),
        backbone=BackboneConfig(widths=(8, 12, 16), stem_widths=(4, 8), blocks=(1, 0, 0), stem_blocks=0),
        fusion=FusionConfig(dim=8),
        localization=LocalizationConfig(mode=mode, kernel_dim=8, tf_heads=2, tf_hidden=8, **loc),
        segmentation=ASPPConfig(rates=(1, 2, 3), channels=8),
    )


@pytest.fixture
def tiny_config():
    return tiny_model_config()


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
