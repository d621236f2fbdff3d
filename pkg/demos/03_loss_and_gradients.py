"""The soft triplet loss, its hard limit and the numerator-only gradient.

With soft mining the loss is a weighted mean of softplus terms. The weights
sum(sigmoid) act as a constant during differentiation, which this demo
shows by comparing the analytic gradient against finite differences of the
numerator alone and of the full quotient.
"""
import numpy as np

from geotrack.loss import L_hard, L_soft, LossConfig, TripletBatch
from geotrack.selfcheck import gradient_errors, random_loss_instance

rng = np.random.default_rng(0)
scores = np.array([0.8, 0.75, 0.5, 0.72, 0.1])
batch = TripletBatch.from_scores(scores, positive=0)
print("scores", scores, "positive = hypothesis 0")
print(f"hard loss           {L_hard(batch, LossConfig()).value:.6f}")
for t in (0.1, 0.03, 0.01, 1e-3, 1e-4):
    print(f"soft loss, T={t:<6g} {L_soft(batch, LossConfig(0.1, t)).value:.6f}")

ma, ground = random_loss_instance(rng, size=8, channels=4, hypotheses=6)
rel, rel_full = gradient_errors(ma, ground, LossConfig())
print(f"\nanalytic gradient vs finite differences (8x8x4 maps, 1 positive, 5 negatives)")
print(f"  numerator-only rule: max relative error {rel:.2e}")
print(f"  full quotient:       max relative error {rel_full:.2e}  (differs: the denominator is held constant)")
