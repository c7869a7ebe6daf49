"""Regenerate the bundled depth-frame fixtures used by ``stretch segment --fixture``."""
from pathlib import Path

import numpy as np

from stretch.geometry.frame import write_frame
from stretch.sim.scene import SceneState, indent, observe
from stretch.sim.shapes import Placed, make_indenter
from stretch.sim.sheet import make_sheet

DATA = Path(__file__).resolve().parents[1] / "src" / "stretch" / "data"


def main():
    sheet = make_sheet(0.0)
    scene = SceneState(sheet, Placed(make_indenter("cylinder", 20.0), np.eye(4)), rng_seed=20)
    scene, _ = indent(scene, 10.0)
    write_frame(observe(scene), DATA / "cylinder20_frame.txt", ["cylinder d=20 mm pressed 10 mm, stretch 0 mm, seed 20"])
    flat = SceneState(sheet, Placed(make_indenter("cylinder", 20.0), np.eye(4)), rng_seed=21)
    write_frame(observe(flat), DATA / "flat_frame.txt", ["membrane at rest, stretch 0 mm, seed 21"])


if __name__ == "__main__":
    main()
