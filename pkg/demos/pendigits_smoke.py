"""Train the small Pendigits network and watch test accuracy climb.

Uses configs/pendigits-smoke.json (16-64-64-10, split 1-2-2-1, 30 Newton
iterations). Takes well under a minute on a laptop.

Run: python demos/pendigits_smoke.py
"""

from pathlib import Path

from distnewton.cli import RunConfig, prepare_data
from distnewton.dist import NewtonHyper, newton_train

cfg = RunConfig.load(Path(__file__).resolve().parents[1] / "configs" / "pendigits-smoke.json")
net = cfg.net_config()
data = prepare_data(cfg, net)
print(f"{len(data.train)} training and {len(data.test)} test instances, net {net}")


def show(rec):
    if rec.iter == 0:
        print(f"start: f = {rec.f:.4f}, accuracy {rec.metric:.4f}")
        return
    print(f"iter {rec.iter:2d}  f = {rec.f:.5f}  acc = {rec.metric:.4f}  step {rec.alpha:<6g} "
          f"lambda {rec.lam_next:.3g}  CG iterations {sum(rec.cg_iters)}")


res = newton_train(data.train, net, cfg.split_structure(net), NewtonHyper(**cfg.newton), seed=cfg.seed,
                   max_iter=cfg.max_iter, test=data.test, on_record=show)
print(f"final test accuracy {res.history[-1].metric:.4f} after {res.history[-1].elapsed_sec:.1f}s of training")
