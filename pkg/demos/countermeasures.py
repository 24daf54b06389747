"""Padding defenses and what they cost.

Builds a corpus in which keywords share their packet skeleton and differ
only in sizes, then measures closed-world accuracy and bandwidth overhead
before and after padding every packet to the MTU and after randomised
HTTPOS-style padding.

    python demos/countermeasures.py
"""

from kwfp.countermeasures import CmConfig, apply_countermeasure, bandwidth_overhead
from kwfp.evaluation import SplitSpec, closed_world_eval, interleaved_split
from kwfp.learner import TrainConfig
from kwfp.synth import build_world, generate_dataset

world = build_world(seed=6, n_keywords=20, profile="stable", shared_skeleton=True)
train, _, test = interleaved_split(generate_dataset(world, 30), SplitSpec(4, 1, 1))
config = TrainConfig(n_trees=100, rng_seed=0)
cm = CmConfig(rng_seed=7)


def accuracy(tr, te):
    return closed_world_eval(tr, te, "psc", config, repetitions=1).metrics["accuracy_mean"]


print(f"no defense:  accuracy {accuracy(train, test):.3f}")
for defense in ("pad-to-mtu", "httpos"):
    tr, _, _ = apply_countermeasure(train, defense, cm)
    te, _, _ = apply_countermeasure(test, defense, cm)
    overhead = bandwidth_overhead(list(train) + list(test), list(tr) + list(te)).overhead
    print(f"{defense:11s}  accuracy {accuracy(tr, te):.3f}, bandwidth overhead {100 * overhead:.1f} %")
