"""Hausdorff, capacity and hitting ladders for the drift-sharpness construction, with a control run."""

from __future__ import annotations

from dataclasses import dataclass, field

from _config import parse, save
from fbmhit.hitlab import sharpness_experiment
from fbmhit.svf import SlowVarySpec


@dataclass
class SharpnessConfig:
    H: float = 0.5
    d: int = 1
    gamma: float = 0.0
    slow_beta: float = 1.0
    K: int = 10
    n_paths: int = 20_000
    drift_seeds: list = field(default_factory=lambda: [0, 1, 2])
    control: bool = True
    threads: int = 1


def run(cfg: SharpnessConfig) -> dict:
    return sharpness_experiment(cfg.H, cfg.d, cfg.gamma, SlowVarySpec.log_power(cfg.slow_beta), K=cfg.K,
                                n_paths=cfg.n_paths, drift_seeds=tuple(cfg.drift_seeds), control=cfg.control,
                                threads=cfg.threads)


if __name__ == "__main__":
    cfg, out = parse(SharpnessConfig, __doc__)
    rep = run(cfg)
    for name in ("main", "control"):
        if name in rep:
            r = rep[name]
            print(name, "Hausdorff", [round(v, 4) for v in r["hausdorff"]["values"]],
                  "capacity", [round(v, 4) for v in r["capacity"]["values"]],
                  "stable drifts", r["fraction_drifts_stable"])
    print("written to", save(out, "sharpness", cfg, rep))
