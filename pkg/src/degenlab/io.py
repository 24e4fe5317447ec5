"""Run configuration and artifact writing.

Configs are flat ``key=value`` text.  Parameter keys follow
:meth:`FamilyParams.to_mapping`; everything else is a run setting.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .family import PARAM_KEYS, FamilyParams, format_float, parse_kv

__all__ = ["RunConfig", "format_float", "write_artifact", "load_config"]

SETTING_KEYS = ("seed", "threads", "out_dir", "n_points", "n_steps", "n_orbits", "burn_in",
                "beta", "n_seeds", "period", "n_circle", "radius", "t0_re", "t0_im",
                "H_center_re", "H_center_im", "H_halfwidth", "nx", "ny", "delta",
                "vectors_per_point", "n_pairs")


@dataclass
class RunConfig:
    params: FamilyParams
    settings: dict = field(default_factory=dict)
    master_seed: int = 0
    output_dir: Path = Path(".")
    thread_count: int | None = None  # None: DEGENLAB_THREADS or 1

    @classmethod
    def from_mapping(cls, m):
        m = dict(m)
        unknown = sorted(k for k in m if k not in PARAM_KEYS and k not in SETTING_KEYS)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        params = FamilyParams.from_mapping({k: v for k, v in m.items() if k in PARAM_KEYS})
        settings = {k: m[k] for k in SETTING_KEYS if k in m and k not in ("seed", "threads", "out_dir")}
        return cls(params, settings, int(m.get("seed", 0)), Path(m.get("out_dir", ".")),
                   int(m["threads"]) if "threads" in m else None)

    @classmethod
    def from_text(cls, text):
        return cls.from_mapping(parse_kv(text))

    def get(self, key, default, kind=float):
        return kind(self.settings.get(key, default))

    def to_text(self):
        """Normal form: parameters in canonical order, then settings."""
        lines = [self.params.to_text().rstrip("\n"),
                 f"seed={self.master_seed}", f"out_dir={self.output_dir}"]
        if self.thread_count is not None:
            lines.append(f"threads={self.thread_count}")
        lines += [f"{k}={self.settings[k]}" for k in SETTING_KEYS if k in self.settings]
        return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    return RunConfig.from_text(Path(path).read_text())


def write_artifact(path, text, meta=None):
    """Write ``text`` to ``path`` (and ``meta`` to ``path.meta``) atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
    if meta is not None:
        meta_path = path.with_suffix(".meta")
        meta_path.write_text(meta)
    return path
