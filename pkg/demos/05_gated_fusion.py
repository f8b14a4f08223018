"""The three fusion strategies and the Gumbel-softmax gate.

Demonstrates the per-account convex combination of token embeddings, the
context-enhanced node embedding, and their learnable blend, plus how the
temperature and the hard straight-through mode shape the gate.
"""

import numpy as np

from chainfraud.autodiff import Tensor
from chainfraud.fusion import dynamic_fuse, gate_weights, locked_gate, sample_gumbel

rng = np.random.default_rng(0)
tokens = rng.normal(size=(1, 4, 3))  # one account, 4 positions, width 3
node = rng.normal(size=(1, 3))
alpha = Tensor(np.asarray(0.5))

print("strategy 1 (tokens only) returns the token embeddings unchanged:")
print(dynamic_fuse(Tensor(tokens), Tensor(node), locked_gate(1, 0).g, alpha).data[0])

print("\nstrategy 2 broadcasts the node embedding to every position:")
print(dynamic_fuse(Tensor(tokens), Tensor(node), locked_gate(1, 1).g, alpha).data[0])

print("\nstrategy 3 with alpha=0.5 is the rowwise midpoint:")
print(dynamic_fuse(Tensor(tokens), Tensor(node), locked_gate(1, 2).g, alpha).data[0])

# --- the gate ---------------------------------------------------------------
logits = Tensor(np.array([[1.2, 0.3, -0.5]]))
print("\nsoft gate at decreasing temperature (noiseless):")
for tau in (4.0, 1.0, 0.25, 0.05):
    g = gate_weights(logits, tau=tau).g.data[0]
    print(f"  tau={tau:<5} g = {np.round(g, 4)}")

noise = sample_gumbel((1, 3), rng)
soft = gate_weights(logits, tau=1.0, noise=noise)
hard = gate_weights(logits, tau=1.0, hard=True, noise=noise)
print(f"\nwith Gumbel noise: soft {np.round(soft.g.data[0], 4)}")
print(f"hard (straight-through, one-hot forward): {hard.g.data[0]}, "
      f"selected strategy {hard.selected[0]}")
print("gradients through the hard gate follow the soft relaxation exactly")
