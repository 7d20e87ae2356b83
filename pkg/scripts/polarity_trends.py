"""Hitting ladders below and above the polarity threshold H d = dim E for E = [1/4, 1]."""

from __future__ import annotations

from dataclasses import dataclass, field

from _config import parse, save
from fbmhit.gauss import ProcessSpec
from fbmhit.hitlab import HittingExperiment, Target, TimeSet, estimate_hitting, ladder_change, ladder_ratios


@dataclass
class PolarityTrendsConfig:
    n_paths: int = 10_000
    seed: int = 4
    low_H: float = 0.25
    low_rungs: list = field(default_factory=lambda: [[1024, 0.02], [2048, 0.01], [4096, 0.005]])
    high_H: float = 0.75
    high_x: list = field(default_factory=lambda: [0.3, 0.0])
    high_rungs: list = field(default_factory=lambda: [[4096, 0.2], [4096, 0.1], [4096, 0.05], [4096, 0.025]])


def run(cfg: PolarityTrendsConfig) -> dict:
    low = estimate_hitting(HittingExperiment(ProcessSpec.fbm(cfg.low_H), TimeSet(0.25, 1.0), Target("point", [0.0]),
                                             [tuple(r) for r in cfg.low_rungs], cfg.n_paths, cfg.seed,
                                             allow_subfloor=True))
    high = estimate_hitting(HittingExperiment(ProcessSpec.fbm(cfg.high_H, len(cfg.high_x)), TimeSet(0.25, 1.0),
                                              Target("point", cfg.high_x), [tuple(r) for r in cfg.high_rungs],
                                              cfg.n_paths, cfg.seed))
    return {"low": low.to_dict(), "low_change": ladder_change(low.values()),
            "high": high.to_dict(), "high_ratios": ladder_ratios(high.values())}


if __name__ == "__main__":
    cfg, out = parse(PolarityTrendsConfig, __doc__)
    res = run(cfg)
    print("low H ladder:", [round(v["p_hat"], 4) for v in res["low"]["ladder"]], "change", round(res["low_change"], 3))
    print("high H ratios:", [round(r, 3) for r in res["high_ratios"]])
    print("written to", save(out, "polarity_trends", cfg, res))
