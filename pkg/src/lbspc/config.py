"""Run configuration: key=value text file, overridable per CLI flag."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path


@dataclass
class RunConfig:
    dataset_dir: str = "."
    output_dir: str = "lbspc_out"
    target_vertices: int = 15000
    remesh_iterations: int = 5
    k: str = "auto"  # integer or "auto"
    k_max: int = 60
    m0: int = 20
    alpha: float = 0.05
    n_perm: int = 1000
    ewma_lambda: float = 0.1
    arl0: float = 200.0
    n_cal: int = 2000
    seed: int = 0
    correspondences: str = ""
    boundary_condition: str = "neumann"
    keep_largest_component: bool = True
    roi_min_vertices: int = 2000
    roi_max_iter: int = 3

    def resolved_k(self) -> int | None:
        """Monitored spectrum length, or None when selection is automatic."""
        if str(self.k).lower() == "auto":
            return None
        k = int(self.k)
        if not (2 <= k <= 200):
            raise ValueError("k must be in [2, 200] or 'auto'")
        return k


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def load_config(path) -> RunConfig:
    cfg = RunConfig()
    known = {f.name: f.type for f in fields(RunConfig)}
    text = Path(path).read_text(encoding="utf-8")
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key = value")
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in known:
            raise ValueError(f"{path}:{ln}: unknown config key {key!r}")
        cur = getattr(cfg, key)
        if isinstance(cur, bool):
            low = val.lower()
            if low in _BOOL_TRUE:
                parsed = True
            elif low in _BOOL_FALSE:
                parsed = False
            else:
                raise ValueError(f"{path}:{ln}: bad boolean {val!r}")
        elif isinstance(cur, int):
            parsed = int(val)
        elif isinstance(cur, float):
            parsed = float(val)
        else:
            parsed = val
        setattr(cfg, key, parsed)
    return cfg


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    return cfg
