"""Why fingerprints go stale: template drift over time and browser differences.

First a forest trained at time zero is scored on test sets collected after
growing gaps, with and without template drift.  Then one trained on a
"chrome" corpus is scored on a "firefox" corpus whose packets are shifted
by a few bytes, and on the union of both.

    python demos/drift_and_platforms.py
"""

from kwfp.evaluation import cross_platform_eval, time_gap_eval
from kwfp.learner import TrainConfig
from kwfp.synth import build_world, generate_dataset, with_profile

config = TrainConfig(n_trees=50, rng_seed=0)
gaps = [0, 2, 4, 6, 8]

for drift in (0.0, 0.1):
    world = build_world(10, 20, with_profile("stable", drift_rate=drift, template_noise=3.0))
    tests = [(str(g), generate_dataset(world, range(100 + 10 * i, 110 + 10 * i), gap=float(g)))
             for i, g in enumerate(gaps)]
    rep = time_gap_eval(generate_dataset(world, range(20)), tests, "psc", config, repetitions=1)
    print(f"drift {drift}: accuracy by gap " + "  ".join(f"{r['gap']}:{r['mean']:.2f}" for r in rep.rows))

world = build_world(8, 20, "stable")
trains = {"chrome": generate_dataset(world, range(20)),
          "firefox": generate_dataset(world, range(20), browser="firefox", size_shift=25)}
tests = {"chrome": generate_dataset(world, range(20, 30)),
         "firefox": generate_dataset(world, range(20, 30), browser="firefox", size_shift=25)}
rep = cross_platform_eval(trains, tests, "psc", config, repetitions=1, merged=[("chrome", "firefox")])
for row in rep.rows:
    print(f"train {row['train']:15s} test {row['test']:8s} accuracy {row['mean']:.3f}")
