"""How much CG work does relaxed synchronisation save?

With r = 100 every partition must meet its own residual test before the
block CG stops. With r = 50 the solve ends once half of them have, as long
as the rest have done at least cg_min iterations. Both runs below use the
smoke Pendigits setup.

Run: python demos/sync_relaxation.py
"""

from pathlib import Path

from distnewton.cli import RunConfig, prepare_data
from distnewton.dist import NewtonHyper, newton_train

cfg = RunConfig.load(Path(__file__).resolve().parents[1] / "configs" / "pendigits-smoke.json")
net = cfg.net_config()
data = prepare_data(cfg, net)

for r in (100.0, 50.0):
    hyper = NewtonHyper(**dict(cfg.newton, r_percent=r))
    res = newton_train(data.train, net, cfg.split_structure(net), hyper, seed=cfg.seed, max_iter=15,
                       test=data.test)
    steps = res.history[1:]
    per_step = sum(sum(s.cg_iters) for s in steps) / len(steps)
    print(f"r = {r:5.1f}%: {per_step:7.1f} CG iterations per Newton step (all partitions), "
          f"final accuracy {steps[-1].metric:.4f}, {steps[-1].elapsed_sec:.1f}s")
