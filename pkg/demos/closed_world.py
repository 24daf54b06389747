"""Closed world: which of 20 synthetic keywords was typed?

Generates a noisy-profile corpus (third-party connections, size jitter), splits it 4:1:1 per keyword, trains an
Extra-Trees forest on packet-size counts and reports accuracy together with
the feature categories the forest leaned on most.

    python demos/closed_world.py
"""

from kwfp.evaluation import KeywordClassifier, SplitSpec, closed_world_eval, interleaved_split
from kwfp.learner import TrainConfig, category_importance
from kwfp.synth import build_world, generate_dataset

world = build_world(seed=1, n_keywords=20, profile="noisy")
corpus = generate_dataset(world, 30)
train, val, test = interleaved_split(corpus, SplitSpec(4, 1, 1))
print(f"{len(corpus)} traces: {len(train)} train, {len(val)} validation, {len(test)} test")

config = TrainConfig(n_trees=100, rng_seed=0)
for features in ("psc", "kfp", "wfinpp"):
    report = closed_world_eval(train, test, features, config, repetitions=3)
    m = report.metrics
    print(f"{features:7s} accuracy {100 * m['accuracy_mean']:6.2f} ± {100 * m['accuracy_std']:.2f} %")

model = KeywordClassifier.fit(train, "wfinpp", config)
ranked = sorted(category_importance(model.forest, model.space.catalog).items(), key=lambda kv: -kv[1])
print("most useful wfinpp categories:")
for name, share in ranked[:5]:
    print(f"  {share:6.3f}  {name}")
