"""Hitting and potential evidence for the critical pair E1 (null measure) and E2 (positive capacity)."""

from __future__ import annotations

from dataclasses import dataclass

from _config import parse, save
from fbmhit.hitlab import polarity_dichotomy


@dataclass
class DichotomyConfig:
    H: float = 0.5
    d: int = 1
    beta: float = 2.0
    K: int = 10
    n_paths: int = 20_000
    l0: float = 0.04
    seed: int = 5
    threads: int = 1


def run(cfg: DichotomyConfig) -> dict:
    return polarity_dichotomy(cfg.H, cfg.d, beta=cfg.beta, K=cfg.K, n_paths=cfg.n_paths, l0=cfg.l0, seed=cfg.seed,
                              threads=cfg.threads)


if __name__ == "__main__":
    cfg, out = parse(DichotomyConfig, __doc__)
    rep = run(cfg)
    pot = rep["potential"]
    print(f"separation {rep['separation']:.1f}  capacity change {pot['capacity_change']:.3f}  "
          f"Hausdorff shrink {pot['hausdorff_shrink']:.4f}")
    print("written to", save(out, "critical_dichotomy", cfg, rep))
