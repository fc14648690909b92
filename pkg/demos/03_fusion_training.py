"""Learning the fusion weights on train classes and testing on held-out classes."""

from mml import FusionWeights, RunConfig, SyntheticSpec, evaluate, generate_synthetic, train_fusion

# 20 train classes and 20 test classes. Part descriptors carry most of the
# signal here, so the learned weights should lean on the part branch.
bank = generate_synthetic(SyntheticSpec(num_classes=40, per_class=20, shape=(16, 5, 5),
                                        noise_scale=2.0, part_signal=True,
                                        split_counts=(20, 0, 20), seed=7))

weights = train_fusion(RunConfig(bank=bank, mode="train-fusion", tasks=300, lr=0.5, seed=70))
print("learned w:", weights.w.round(3), " running mean:", weights.running_mean.round(2))

test = RunConfig(bank=bank, tasks=300, seed=7)
print("initial weights:", evaluate(test, FusionWeights()).accuracy)
print("trained weights:", evaluate(test, weights).accuracy)

weights.save("fusion_weights.json")
print("reloaded equal:", FusionWeights.load("fusion_weights.json") == weights)
