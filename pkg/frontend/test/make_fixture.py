"""Create a deterministic test image and direction file for the UI tests."""

import json
import sys

import numpy as np

import segedit as se
from segedit.prng import SplitMix64

out_dir = sys.argv[1]
gen = se.new_generator(se.GeneratorConfig(seed=7))
rng = SplitMix64(424242)
w = se.map_z_to_w(gen, se.LatentCode(se.Space.Z, rng.normal(gen.config.latent_dim)))
se.save_image(se.synthesize(gen, w), f"{out_dir}/image.png")

v = rng.normal(gen.config.latent_dim)
v = v / np.linalg.norm(v)
with open(f"{out_dir}/direction.json", "w", encoding="utf-8") as fh:
    json.dump({"name": "probe", "space": "W", "payload": v.tolist()}, fh)
print("ok")
