"""
One simulated day under load
============================

Runs the recommender simulator for a day with a fixed fusion action and
looks at how the router's cache decisions follow the traffic profile.
"""

import numpy as np

from carl.config import RunConfig
from carl.env import Simulator
from carl.env.qps import QpsProfile
from carl.env.router import ProbabilisticRouter

cfg = RunConfig()
sim = Simulator(cfg, seed=3, n_users=1000)
sim.run(lambda s: np.ones(cfg.n_a), until=86400.0)
st = sim.stats
print(f"{st.steps} requests in {len(st.sessions)} finished sessions, {st.n_forced} forced to real time")

# cached results are worse: mean cached / mean real-time feedback
for head in ("watch", "likes", "follows"):
    print(f"  {head:8s} ratio {st.ratio(head):.3f}")

# hourly share of cached requests next to the router's expected share
frac = st.cached_fraction().reshape(24, -1)
router = ProbabilisticRouter.from_config(cfg.qps, cfg.router)
profile = QpsProfile(cfg.qps)
for h in range(0, 24, 2):
    t = (h + 0.5) * 3600.0
    print(f"  {h:02d}h  qps {profile.mean_qps(t):7.1f}  expected {router.p_cached(t):.2f}  "
          f"measured {np.nanmean(frac[h]):.2f}")
print(f"peak load at {24 * profile.peak_tod():.2f}h")
