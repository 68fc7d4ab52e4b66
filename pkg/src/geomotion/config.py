"""Model configuration and per-domain presets."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .layers import DmlVariant, GtlVariant

__all__ = ["ModelConfig", "PRESETS", "preset_config"]


@dataclass
class ModelConfig:
    """Architecture and optimization settings for one classifier.

    ``projection`` selects the geometric frontend when no learnable
    transform is present: ``auto`` resolves to ``logmap`` when a scaling
    layer is configured and to ``none`` (features straight off the
    pre-shape sphere, the ablation baseline) otherwise. ``pt`` feeds
    consecutive-frame tangents parallel-transported to the reference.
    """

    n_classes: int
    seq_len: int
    n_joints: int
    gtl_variant: GtlVariant | None = None
    dml_variant: DmlVariant | None = None
    projection: str = "auto"
    ref_index: int = 0
    conv_layers: int = 1
    conv_kernel: int = 3
    conv_channels: int = 64
    lstm_units: int = 12
    fc_hidden: int = 32
    batch_size: int = 16
    epochs: int = 40
    lr: float = 1e-3
    transport_rungs: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.conv_layers not in (1, 2):
            raise ValueError(f"conv_layers must be 1 or 2, got {self.conv_layers}")
        if not 0 <= self.ref_index < self.seq_len:
            raise ValueError(f"ref_index {self.ref_index} out of range for "
                             f"seq_len {self.seq_len}")
        if self.projection not in ("auto", "none", "logmap", "pt"):
            raise ValueError(f"unknown projection {self.projection!r}")
        if self.gtl_variant is not None and self.projection not in ("auto", "logmap"):
            raise ValueError("a transform layer implies log-map projection")

    @property
    def resolved_projection(self) -> str:
        if self.gtl_variant is not None:
            return "gtl"
        if self.projection == "auto":
            return "logmap" if self.dml_variant is not None else "none"
        return self.projection

    @property
    def feature_rows(self) -> int:
        return self.n_joints - 1

    def with_overrides(self, **kwargs) -> "ModelConfig":
        return replace(self, **kwargs)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


# Per-domain defaults: two conv blocks and a wide classifier for action
# data, a single conv block and a narrow classifier elsewhere.
PRESETS: dict[str, dict] = {
    "action": dict(conv_layers=2, fc_hidden=512, batch_size=64, epochs=50,
                   lr=1e-4, seq_len=100),
    "disease": dict(conv_layers=1, fc_hidden=32, batch_size=12, epochs=35,
                    lr=1e-3, seq_len=221),
    "rehab": dict(conv_layers=1, fc_hidden=32, batch_size=16, epochs=40,
                  lr=1e-3, seq_len=150),
}


def preset_config(preset: str, n_classes: int, n_joints: int, **overrides) -> ModelConfig:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    settings = dict(PRESETS[preset])
    settings.update(overrides)
    return ModelConfig(n_classes=n_classes, n_joints=n_joints, **settings)
