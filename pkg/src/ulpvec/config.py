"""Flat ``key = value`` run configuration and sweep files.

A sweep file is a sequence of such blocks separated by blank lines.  Any
value may be a comma list (``e = 8, 16``) or an inclusive integer range
(``na = 1..8``); a block expands to the cartesian product of its values.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .kernels import VARIANTS
from .packing import BUDGET_POLICIES, Precision
from .perfmodel import SweepPoint


class ConfigError(ValueError):
    pass


ALIASES = {
    "e": "elem_bits", "elem-bits": "elem_bits",
    "na": "act_bits", "nw": "wgt_bits",
    "c": "channels", "h": "height", "w": "width",
    "fh": "kh", "fw": "kw",
    "budget-policy": "budget_policy", "prepacked-weights": "prepacked_weights",
}


@dataclass
class RunConfig:
    variant: str = "vmacsr"
    elem_bits: int = 16
    act_bits: int = 2
    wgt_bits: int = 2
    channels: int = 32
    height: int = 64
    width: int = 64
    kh: int = 7
    kw: int = 7
    budget: int | None = None
    budget_policy: str = "conservative"
    prepacked_weights: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {', '.join(VARIANTS)}")
        if self.variant == "int16":
            self.elem_bits = 16
        elif self.elem_bits not in (8, 16):
            raise ConfigError(f"element width must be 8 or 16, got {self.elem_bits}")
        for name in ("channels", "height", "width", "kh", "kw"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.kh > self.height or self.kw > self.width:
            raise ConfigError(f"kernel {self.kh}x{self.kw} exceeds input {self.height}x{self.width}")
        try:
            Precision(self.act_bits, self.wgt_bits)
        except ValueError as err:
            raise ConfigError(str(err)) from err
        if self.budget_policy not in BUDGET_POLICIES:
            raise ConfigError(f"budget policy must be one of {', '.join(BUDGET_POLICIES)}")
        if self.budget is not None and self.budget < 1:
            raise ConfigError("budget must be >= 1")

    @property
    def precision(self) -> Precision:
        return Precision(self.act_bits, self.wgt_bits)

    def point(self) -> SweepPoint:
        return SweepPoint(self.variant, self.elem_bits, self.act_bits, self.wgt_bits,
                          self.channels, self.height, self.width, self.kh, self.kw,
                          self.budget_policy, self.prepacked_weights, self.seed)

    def update(self, values: dict) -> "RunConfig":
        for key, raw in values.items():
            if raw is None:
                continue
            apply_key(self, key, raw)
        return self


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _coerce(field_name: str, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if field_name in ("variant", "budget_policy"):
        return raw
    if field_name == "prepacked_weights":
        if raw.lower() not in _BOOL:
            raise ConfigError(f"not a boolean: {raw!r}")
        return _BOOL[raw.lower()]
    if field_name == "budget" and raw.lower() in ("", "none", "auto"):
        return None
    try:
        return int(raw)
    except ValueError as err:
        raise ConfigError(f"{field_name}: not an integer: {raw!r}") from err


def apply_key(cfg: RunConfig, key: str, raw) -> None:
    key = key.strip().lower().replace("_", "-")
    if key == "hw":
        cfg.height = cfg.width = _coerce("height", raw)
        return
    if key == "k":
        cfg.kh = cfg.kw = _coerce("kh", raw)
        return
    name = ALIASES.get(key, key.replace("-", "_"))
    if name not in RunConfig.__dataclass_fields__:
        raise ConfigError(f"unknown key {key!r}")
    setattr(cfg, name, _coerce(name, raw))


def parse_block(text: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip().lower()] = v.strip()
    return out


def parse_blocks(text: str) -> list[dict[str, str]]:
    blocks, cur = [], []
    for line in text.splitlines() + [""]:
        if line.strip():
            cur.append(line)
        elif cur:
            block = parse_block("\n".join(cur))
            if block:
                blocks.append(block)
            cur = []
    return blocks


def _expand_value(v: str) -> list[str]:
    out = []
    for part in v.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            try:
                out.extend(str(i) for i in range(int(lo), int(hi) + 1))
            except ValueError as err:
                raise ConfigError(f"bad range {part!r}") from err
        elif part:
            out.append(part)
    return out


def expand_block(block: dict[str, str], base: RunConfig | None = None) -> list[RunConfig]:
    keys = list(block)
    choices = [_expand_value(block[k]) for k in keys]
    configs = []
    for combo in itertools.product(*choices):
        cfg = RunConfig(**vars(base)) if base else RunConfig()
        for k, v in zip(keys, combo):
            apply_key(cfg, k, v)
        cfg.validate()
        configs.append(cfg)
    return configs


def load_sweep(text: str) -> list[SweepPoint]:
    points = []
    for block in parse_blocks(text):
        points.extend(c.point() for c in expand_block(block))
    return points


def read_sweep_file(name: str) -> str:
    """Read a sweep file, falling back to the bundled ones (e.g. ``fig6.sweep``)."""
    p = Path(name)
    if p.exists():
        return p.read_text()
    bundled = resources.files("ulpvec") / "data" / (name if name.endswith(".sweep") else name + ".sweep")
    if bundled.is_file():
        return bundled.read_text()
    raise ConfigError(f"sweep file not found: {name}")
