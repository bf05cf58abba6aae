#!/usr/bin/env python3
"""Pretrain the Siamese angle regressor on the procedural corpus and probe it:
validation error, identity pairs, and classification accuracy over a sweep
of decision thresholds.

Runtime: several minutes on one CPU (the conv trunk dominates). Lower
PAIRS/EPOCHS for a quicker, rougher run.
"""

import numpy as np

from dronewatch import angle, datagen
from dronewatch.imaging import preprocess_array

CORPUS = 400
PAIRS = 4000
EPOCHS = 16
SEED = 0

corpus = datagen.texture_corpus(CORPUS, size=96, seed=7)
print(f"pretraining on {PAIRS} pairs from {CORPUS} procedural images...")
model = angle.pretrain(corpus, angle.AngleTrainConfig(
    seed=SEED, pairs=PAIRS, epochs=EPOCHS))
print(f"validation MAE {model.meta['val_mae_degrees']:.2f} deg, "
      f"MSE {model.meta['val_mse_degrees']:.1f} deg^2")

# identity pairs should sit near zero
rng = np.random.default_rng(1)
idents = [preprocess_array(corpus[i]) for i in rng.choice(CORPUS, size=20, replace=False)]
ident_angles = [angle.predict_angle(f, f, model) for f in idents]
print(f"(x, x) pairs: mean predicted angle {np.mean(ident_angles):.2f} deg")

# a few single rotations
base = corpus[3]
for theta in (10, 30, 45, 60, 85):
    cand = preprocess_array(datagen.rotate_image(base, float(theta)))
    pred = angle.predict_angle(preprocess_array(base), cand, model)
    sig = angle.sigma_angle(pred)
    print(f"true {theta:3d} deg -> predicted {pred:6.2f} deg  sigma_l={sig:.3f}")

# threshold sweep over jittered normals and tilted abnormals
labels = ([datagen.LabeledTimestamp(float(i), "normal", 0.0) for i in range(150)]
          + [datagen.LabeledTimestamp(float(150 + i), "abnormal",
                                      float(rng.uniform(30, 90))) for i in range(150)])
frames = datagen.make_frame_stream(corpus[5], labels, seed=2)
reference = frames[0].pixels
angles = angle.predict_angles(reference, [f.pixels for f in frames], model)
truth = [lab.label for lab in labels]
print("\nthreshold sweep (angle-only classification):")
print(f"{'threshold':>10s} {'accuracy':>9s}")
for threshold in (20.0, 25.0, 30.0, 40.0):
    preds = [angle.classify_by_angle(a, threshold) for a in angles]
    acc = np.mean([p == t for p, t in zip(preds, truth)])
    print(f"{threshold:>10.0f} {acc:>9.3f}")
