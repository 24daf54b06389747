"""Open world: spot monitored keywords among unmonitored traffic.

Eight keywords are monitored; traces of 40 other keywords carry the
non-targeted label "-1".  The binary stage yields a precision-recall curve,
the two-stage pipeline adds keyword identification, and the single
multiclass model is shown for comparison.

    python demos/open_world.py
"""

from kwfp.evaluation import (
    KeywordClassifier, binary_eval, fit_binary, fit_keyword_model, multiclass_eval, multilevel_eval,
)
from kwfp.learner import TrainConfig
from kwfp.synth import build_world, generate_dataset, with_profile

profile = with_profile("noisy", template_noise=3.0)
monitored = build_world(seed=21, n_keywords=8, profile=profile)
background = build_world(seed=22, n_keywords=40, profile=profile)

train = generate_dataset(monitored, range(10)) + generate_dataset(background, range(3), label="-1")
test = generate_dataset(monitored, range(10, 20)) + generate_dataset(background, range(3, 6), label="-1")
config = TrainConfig(n_trees=100, rng_seed=0)

binary = fit_binary(train, "kfp", config)
rep = binary_eval(train, test, "kfp", model=binary)
print(f"binary stage: AP {rep.metrics['ap']:.3f}, precision {rep.metrics['precision']:.3f}, "
      f"recall {rep.metrics['recall']:.3f}, FPR {rep.metrics['fpr']:.3f}")

ml = multilevel_eval(binary, fit_keyword_model(train, "kfp", config), test)
print(f"two-stage: FNR {ml.metrics['fnr']:.3f}, FPR {ml.metrics['fpr']:.3f}, "
      f"keyword accuracy on detected traces {ml.metrics['accuracy_ml']:.3f}")

mc = multiclass_eval(KeywordClassifier.fit(train, "kfp", config), test)
print(f"multiclass: TPR {mc.metrics['tpr']:.3f}, FMR {mc.metrics['fmr']:.3f}, FPR {mc.metrics['fpr']:.3f}")
