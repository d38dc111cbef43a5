"""Model configuration, presets and the JSON config file format."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace

from .mixers import MIXERS, factorize

EMBED_KINDS = ("patchify", "overlap")
MERGE_KINDS = ("linear", "conv")
HEAD_KINDS = ("classify", "feature")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    input_h: int = 224
    input_w: int = 224
    patch_size: int = 4
    dims: tuple = (64, 128, 320, 512)
    depths: tuple = (2, 2, 6, 2)
    hr_depths: tuple = (2, 2, 2)
    hr_enabled: bool = False
    head_kind: str = "classify"
    classes: int = 1000
    factorizations: tuple = None
    # Extensions beyond the base file schema; all optional in JSON.
    mixer: str = "poolattn"
    embed: str = "patchify"
    merge: str = "linear"
    ln_eps: float = 1e-5

    def __post_init__(self):
        for key in ("dims", "depths", "hr_depths"):
            object.__setattr__(self, key, tuple(int(v) for v in getattr(self, key)))
        if self.factorizations is None:
            object.__setattr__(self, "factorizations", tuple(factorize(d) for d in self.dims))
        else:
            object.__setattr__(self, "factorizations",
                               tuple(tuple(int(v) for v in f) for f in self.factorizations))
        self.validate()

    def validate(self):
        problems = []
        if self.input_h <= 0 or self.input_w <= 0 or self.input_h % 32 or self.input_w % 32:
            problems.append(f"input {self.input_h}x{self.input_w} must be positive multiples of 32")
        if self.patch_size != 4:
            problems.append("patch_size must be 4 (stage-1 grid is H/4 x W/4)")
        if len(self.dims) != 4 or any(d < 1 for d in self.dims):
            problems.append("dims must be 4 positive integers")
        if len(self.depths) != 4 or any(d < 0 for d in self.depths):
            problems.append("depths must be 4 non-negative integers")
        if len(self.hr_depths) != 3 or any(d < 0 for d in self.hr_depths):
            problems.append("hr_depths must be 3 non-negative integers")
        if len(self.factorizations) != 4:
            problems.append("factorizations must have 4 entries")
        else:
            for d, (fh, fw) in zip(self.dims, self.factorizations):
                if fh * fw != d:
                    problems.append(f"factorization {fh}x{fw} does not multiply to {d}")
        if self.head_kind not in HEAD_KINDS:
            problems.append(f"head kind must be one of {HEAD_KINDS}")
        if self.head_kind == "classify" and self.classes < 1:
            problems.append("classes must be >= 1")
        if self.mixer not in MIXERS:
            problems.append(f"mixer must be one of {MIXERS}")
        if self.embed not in EMBED_KINDS:
            problems.append(f"embed must be one of {EMBED_KINDS}")
        if self.merge not in MERGE_KINDS:
            problems.append(f"merge must be one of {MERGE_KINDS}")
        if problems:
            raise ConfigError("; ".join(problems))

    def stage_grid(self, i: int) -> tuple[int, int]:
        """Patch grid of stage i (1-based): H / 2**(i+1) x W / 2**(i+1)."""
        f = 2 ** (i + 1)
        return self.input_h // f, self.input_w // f

    def with_(self, **changes) -> "ModelConfig":
        if "dims" in changes and "factorizations" not in changes:
            changes["factorizations"] = None
        return replace(self, **changes)

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["head"] = {"kind": d.pop("head_kind"), "classes": d.pop("classes")}
        for key in ("dims", "depths", "hr_depths"):
            d[key] = list(d[key])
        d["factorizations"] = [list(f) for f in d["factorizations"]]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2)

    def hash(self) -> str:
        canon = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    @classmethod
    def from_json_dict(cls, d: dict) -> "ModelConfig":
        known = {"input_h", "input_w", "patch_size", "dims", "depths", "hr_depths",
                 "hr_enabled", "head", "factorizations", "mixer", "embed", "merge", "ln_eps"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        head = d.pop("head", {"kind": "classify", "classes": 1000})
        if not isinstance(head, dict) or set(head) - {"kind", "classes"}:
            raise ConfigError("head must be an object with keys {kind, classes}")
        d["head_kind"] = head.get("kind", "classify")
        d["classes"] = head.get("classes", 1000)
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path) -> ModelConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return ModelConfig.from_json_dict(data)


def save_config(cfg: ModelConfig, path):
    with open(path, "w") as fh:
        fh.write(cfg.to_json() + "\n")


PRESETS = {
    # desk-scale model used by the gradient suite and toy training
    "micro": ModelConfig(input_h=32, input_w=32, dims=(4, 8, 12, 16), depths=(1, 1, 1, 1),
                         hr_depths=(1, 1, 1), hr_enabled=False, head_kind="classify", classes=4),
    "micro_hr": ModelConfig(input_h=32, input_w=32, dims=(4, 8, 12, 16), depths=(1, 1, 1, 1),
                            hr_depths=(1, 1, 1), hr_enabled=True, head_kind="feature", classes=4),
    # PoolFormer-S12 layout: 7x7/4 stem and 3x3/2 conv downsampling
    "cls_s12": ModelConfig(input_h=224, input_w=224, dims=(64, 128, 320, 512), depths=(2, 2, 6, 2),
                           hr_enabled=False, head_kind="classify", classes=1000,
                           embed="overlap", merge="conv"),
    "potter_hmr": ModelConfig(input_h=256, input_w=256, dims=(64, 128, 320, 512), depths=(2, 2, 6, 2),
                              hr_depths=(2, 2, 2), hr_enabled=True, head_kind="feature",
                              embed="overlap", merge="conv"),
}


def get_preset(name) -> ModelConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
