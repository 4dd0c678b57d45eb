"""Central-cut entanglement entropy of the random preparation circuit, layer by layer."""

import argparse
import math

import numpy as np

from kpzsim.analysis import page_value
from kpzsim.gates import Circuit, random_prep_circuit, run_circuit
from kpzsim.qstate import bipartite_entropy
from kpzsim.typicality import _seed_for

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--L", type=int, default=13, help="chain length including the idle probe at site 0")
ap.add_argument("--layers", type=int, default=30)
ap.add_argument("--samples", type=int, default=20)
ap.add_argument("--seed", type=int, default=0)
args = ap.parse_args()

L = args.L
cut = (L + 1) // 2
ent = np.zeros((args.samples, args.layers))
for i in range(args.samples):
    circ = random_prep_circuit(L, args.layers, _seed_for(args.seed, i), idle=0)
    state = None
    for n, ops in enumerate(circ.layer_ops("prep")):
        state = run_circuit(Circuit(L, ops), state)
        ent[i, n] = bipartite_entropy(state, cut)

page = page_value(2 ** (cut - 1), 2 ** (L - cut))
mean = ent.mean(axis=0)
err = ent.std(axis=0, ddof=1) / math.sqrt(args.samples)
print(f"# L={L} cut={cut} page={page:.4f}")
print("layer  entropy   std_err  rel_to_page")
for n in range(args.layers):
    print(f"{n + 1:5d}  {mean[n]:.4f}  {err[n]:.4f}  {mean[n] / page - 1:+.4f}")
