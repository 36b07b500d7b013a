"""Run one small closed-loop episode for each escort variant on the same
environment and print what happened.

Planner sizes are cut down so this finishes in well under a minute.

    python demos/short_episode.py [seed]
"""

import sys
from dataclasses import replace

from escortplan.deccem import CemConfig
from escortplan.simulator import Config, run_episode

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cem = CemConfig(n_samples=32, n_elite=6, n_inner_iters=3)
base = Config()
base = replace(base, cem=cem, planner=replace(base.planner, cem=cem, n_traj=4, n_mc=16))

for variant, escorts in (("blind", 0), ("mi-ucb", 2), ("si", 2), ("se", 2)):
    log = run_episode(base.with_variant(variant, escorts), seed)
    end = log.ticks[-1]["states"]["0"] if log.ticks else None
    where = f"PA at ({end[0]:.1f}, {end[1]:.1f})" if end else "PA at start"
    print(f"{variant:7s} {log.verdict:9s} after {log.n_ticks:3d} ticks, {where}")
