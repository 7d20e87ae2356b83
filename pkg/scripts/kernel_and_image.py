"""Kernel expectation check against its chi reduction, and voxel image-measure ladders."""

from __future__ import annotations

from dataclasses import dataclass, field

from _config import parse, save
from fbmhit.gauss import ProcessSpec
from fbmhit.hitlab import TimeSet, image_measure_estimate, kernel_expectation_check
from fbmhit.svf import SlowVarySpec


@dataclass
class KernelImageConfig:
    t_ladder: list = field(default_factory=lambda: [0.25, 0.1, 0.03, 0.01, 0.003])
    kernel_paths: int = 200_000
    image_paths: int = 100
    widths: list = field(default_factory=lambda: [0.04, 0.02, 0.01, 0.005])
    seed: int = 11


def run(cfg: KernelImageConfig) -> dict:
    kernels = {
        "constant_d1": kernel_expectation_check(0.5, SlowVarySpec.constant(1.0), 1, cfg.t_ladder, cfg.kernel_paths,
                                                cfg.seed),
        "log_power_d2": kernel_expectation_check(0.4, SlowVarySpec.log_power(1.0), 2, cfg.t_ladder,
                                                 cfg.kernel_paths, cfg.seed),
    }
    images = {
        "H025_d1": image_measure_estimate(ProcessSpec.fbm(0.25), TimeSet(0.25, 1.0), 1024, cfg.widths,
                                          cfg.image_paths, cfg.seed),
        "H075_d2": image_measure_estimate(ProcessSpec.fbm(0.75, 2), TimeSet(0.25, 1.0), 4096, cfg.widths,
                                          cfg.image_paths, cfg.seed),
    }
    return {"kernel": kernels, "image": images}


if __name__ == "__main__":
    cfg, out = parse(KernelImageConfig, __doc__)
    res = run(cfg)
    for k, v in res["kernel"].items():
        print(k, "band", round(v["band"], 3), "agree", v["agree_3sigma"])
    for k, v in res["image"].items():
        print(k, "volumes", [round(x, 4) for x in v["mean_volume"]], "ratios", [round(x, 3) for x in v["ratios"]])
    print("written to", save(out, "kernel_and_image", cfg, res))
