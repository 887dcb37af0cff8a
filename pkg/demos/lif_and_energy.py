# %% [markdown]
# # LIF neurons and the energy ledger
#
# A leaky integrate-and-fire layer turns a real-valued drive into binary
# spikes. Every spike layer in the restorer then records how many of its input
# elements were 1, which gives synaptic operations (SOPs) and an energy figure.

# %%
import numpy as np

from spikestereo import EnergyLedger, LifParams, NetworkConfig, StereoRestorer, energy, lif_forward
from spikestereo.autodiff import Tensor, no_grad

# %% [markdown]
# ## One neuron, constant drive
#
# With tau = 2 the membrane moves halfway toward the drive each step. A drive
# of 0.3 reaches 0.15 after one step and fires on the second; 0.15 never fires.

# %%
for drive in (0.15, 0.3, 0.5):
    x = Tensor(np.full((8, 1), drive))
    spikes, v = lif_forward(x, LifParams(tau=2.0, u_th=0.2))
    print(f"drive {drive:.2f}: {spikes.data[:, 0].astype(int)}  final V {v[0]:.3f}")

# %% [markdown]
# ## Energy of a small restorer
#
# FLOPs only depend on the shapes, SOPs depend on how many spikes fire.

# %%
rng = np.random.default_rng(0)
model = StereoRestorer(NetworkConfig(channels=(8, 16, 24, 32, 40), T=2, refine_channels=16))
# untrained running statistics are placeholders, so normalize with batch statistics
model.train()
left, right = rng.uniform(size=(2, 3, 32, 32)).astype(np.float32)

ledger = EnergyLedger()
with ledger.active(), no_grad():
    out = model(left, right)
report = ledger.report()
print(f"FLOPs {report.total_flops:.5f} G, SOPs {report.total_sops:.5f} G, energy {report.energy_mj:.5f} mJ")
print("same as the formula:", energy(report.total_sops, report.total_flops) == report.energy_mj)

# %%
rates = sorted(report.sfr_per_block, key=lambda r: r[1])
print("quietest blocks:", [(n, round(r, 3)) for n, r in rates[:3]])
print("busiest blocks: ", [(n, round(r, 3)) for n, r in rates[-3:]])
