# %% [markdown]
# # Training a tiny restorer on synthetic raindrops
#
# A short CPU run: render a small stereo dataset, train for a few hundred
# steps and compare validation PSNR against the degraded input.

# %%
import tempfile

import numpy as np

from spikestereo import NetworkConfig, StereoRestorer
from spikestereo.data import generate_dataset, read_manifest
from spikestereo.training import PairDataset, TrainConfig, evaluate, train

# %%
root = tempfile.mkdtemp()
manifest = read_manifest(generate_dataset(root, "raindrop", count=48, size=(64, 64), seed=0))
train_set = PairDataset.from_manifest(manifest.split("train"))
val_set = PairDataset.from_manifest(manifest.split("val"))
print(len(train_set), "train pairs,", len(val_set), "val pairs")

# %% [markdown]
# The tiny config uses channels 8..40 and T = 2 so a step takes well under a
# second on one core.

# %%
model = StereoRestorer(NetworkConfig(channels=(8, 16, 24, 32, 40), T=2, refine_channels=16))
result = train(train_set, model, TrainConfig(steps=300, batch_size=4, crop=32, val_every=100), val=val_set)
for r in result.records[::50]:
    print(r["step"], round(r["loss_l1"], 4), r["psnr_val"])

# %%
scores = evaluate(model, val_set)
print(f"restored {scores['psnr']:.2f} dB, degraded input {scores['psnr_input']:.2f} dB")

# %% [markdown]
# The loss curve is noisy because drop coverage differs from crop to crop.
# Longer runs (2000 steps) are what the acceptance suite uses.

# %%
l1 = np.array([r["loss_l1"] for r in result.records])
print("mean L1 first 50 steps %.4f, last 50 steps %.4f" % (l1[:50].mean(), l1[-50:].mean()))
