"""Run configuration: presets, file loading, env and flag overrides."""

import dataclasses
import os
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from lts.backbone import BackboneConfig
from lts.errors import ConfigError
from lts.fusion import FusionConfig
from lts.localization import LocalizationConfig
from lts.model import ModelConfig
from lts.objective import TrainConfig
from lts.segmentation import ASPPConfig
from lts.text_encoder import TextConfig

ENV_PREFIX = "LTS_"
ABLATIONS = ("fusion", "filter", "seg")


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    preset: str = "paper"
    resolution: int = 416
    seed: int = 0
    ablate: tuple[str, ...] = ()
    data: str | None = None
    val_data: str | None = None
    out: str = "runs/default"

    def validate(self):
        if self.resolution <= 0 or self.resolution % 32:
            raise ConfigError(f"resolution {self.resolution} is not a positive multiple of 32")
        bad = set(self.ablate) - set(ABLATIONS)
        if bad:
            raise ConfigError(f"unknown ablation(s) {sorted(bad)}; choose from {ABLATIONS}")
        self.model.validate()
        self.train.validate()
        self.effective_model().validate()

    def effective_model(self) -> ModelConfig:
        """Model config with the ablation toggles applied."""
        m = from_dict(ModelConfig, to_dict(self.model))
        if "fusion" in self.ablate:
            m.fusion.enabled = False
        if "filter" in self.ablate:
            m.localization.mode = "none"
        if "seg" in self.ablate:
            m.segmentation.enabled = False
        return m


def paper_preset() -> RunConfig:
    return RunConfig(
        model=ModelConfig(
            text=TextConfig(embed_dim=300, hidden_dim=1024, max_len=15),
            backbone=BackboneConfig(widths=(256, 512, 1024), stem_widths=(64, 128),
                                    blocks=(8, 8, 4), stem_blocks=2),
            fusion=FusionConfig(dim=512),
            localization=LocalizationConfig(kernel_dim=1024, tf_heads=4, tf_hidden=1024),
            segmentation=ASPPConfig(rates=(1, 6, 12, 18), channels=256),
        ),
        train=TrainConfig(lr=1e-3, lr_decay_epoch=30, epochs=45, batch_size=18, loc_weight=0.1),
        preset="paper",
        resolution=416,
    )


def desk_preset() -> RunConfig:
    return RunConfig(
        model=ModelConfig(
            text=TextConfig(embed_dim=300, hidden_dim=32, max_len=15),
            backbone=BackboneConfig(widths=(32, 64, 128), stem_widths=(16, 24),
                                    blocks=(1, 1, 1), stem_blocks=0),
            fusion=FusionConfig(dim=64),
            localization=LocalizationConfig(kernel_dim=64, tf_heads=4, tf_hidden=64, coord_channels=True),
            segmentation=ASPPConfig(rates=(1, 6, 12, 18), channels=32),
        ),
        train=TrainConfig(lr=1e-3, lr_decay_epoch=20, epochs=30, batch_size=8, loc_weight=0.1),
        preset="desk",
        resolution=224,
        seed=7,
    )


PRESETS = {"paper": paper_preset, "desk": desk_preset}


def preset(name: str) -> RunConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# ------------------------------------------------------------ (de)serialising

def to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [to_dict(v) for v in obj]
    return obj


def _coerce(tp, value, where):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        return from_dict(tp, value, where)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, where)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        inner = args[0] if args else typing.Any
        return tuple(_coerce(inner, v, where) for v in value)
    if tp is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if tp in (int, float, str, bool) and not isinstance(value, tp):
        raise ConfigError(f"{where}: expected {tp.__name__}, got {value!r}")
    return value


def from_dict(cls, data, where=""):
    """Build a (nested) config dataclass, rejecting unknown keys."""
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{where or cls.__name__}: expected a mapping, got {data!r}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where or cls.__name__}: unknown key(s) {sorted(unknown)}")
    kwargs = {k: _coerce(hints[k], v, f"{where}.{k}".lstrip(".")) for k, v in data.items()}
    return cls(**kwargs)


def merge(base: RunConfig, overrides: dict) -> RunConfig:
    """Apply a partial nested mapping on top of ``base``."""
    merged = _deep_update(to_dict(base), overrides)
    return from_dict(RunConfig, merged)


def _deep_update(base: dict, upd: dict) -> dict:
    out = dict(base)
    for k, v in upd.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_update(out[k], v)
        else:
            out[k] = v
    return out


def env_overrides(environ=None) -> dict:
    """``LTS_TRAIN__EPOCHS=5`` becomes ``{"train": {"epochs": 5}}``."""
    environ = os.environ if environ is None else environ
    out: dict = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX):].lower().split("__")
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = yaml.safe_load(raw)
    return out


def load_file(path) -> dict:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a mapping")
    return data


def resolve(preset_name=None, config_file=None, flags=None, environ=None) -> RunConfig:
    """Preset, then config file, then environment, then flags (flags win)."""
    file_data = load_file(config_file) if config_file else {}
    name = preset_name or file_data.get("preset") or "desk"
    cfg = preset(name)
    for layer in (file_data, env_overrides(environ), flags or {}):
        cfg = merge(cfg, layer)
    cfg.preset = name
    cfg.train.seed = cfg.seed
    cfg.validate()
    return cfg
