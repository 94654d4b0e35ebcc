"""Walk through how a 16-300-300-10 network is cut into variable partitions.

Run: python demos/partition_layout.py
"""

from distnewton.dist import Topology
from distnewton.network import NetConfig
from distnewton.partition import SplitStructure, balance_report, cost_estimate

net = NetConfig([16, 300, 300, 10])
split = SplitStructure.parse("1-2-2-1")
topo = Topology(net, split)

print(f"net {net} with split {split} gives {topo.size} partitions\n")
print("idx layer  inputs      outputs     vars   bias")
for p in topo.partitions:
    print(f"{p.index:3d} {p.layer:5d}  {str(p.in_range):10s}  {str(p.out_range):10s} {p.n_vars:6d}   "
          f"{'yes' if p.owns_bias else 'no'}")

rep = balance_report(topo.partitions)
print(f"\nlargest/smallest weight block: {rep['max_vars']}/{rep['min_vars']} = {rep['ratio']:g}")

# Who talks to whom during the forward pass of layer 2, output group 0
col = topo.column(2, 0)
print(f"\nlayer-2 pre-activations for output group 0 are summed over partitions {col.members}")
print(f"the notifier that decides line-search steps is partition {topo.notifier}")

print("\nanalytical per-partition costs for l = 7494, |S| = 1499:")
for row in cost_estimate(topo.partitions, net, 7494, 1499):
    print(f"  partition {row['partition']}: memory {row['memory']:>9d} floats, "
          f"reduce {row['reduce_comm']:.2e}, broadcast {row['bcast_comm']:.2e}")
