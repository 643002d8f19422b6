# coding: utf-8

# # Same constraints, two kinds of dynamics
#
# Nonholonomic constraints act through reaction forces. Vakonomic ones enter
# the variational principle, and their multipliers nu become state variables.
# Both runs below start from nu = 0 and the same state.

# %%
import math

import numpy as np

from herglotz import IntegratorConfig, build_cache, builtin, integrate

cfg = IntegratorConfig(dt=1e-3, t_end=3.0, record_every=100)


def divergence(name):
    sc = builtin(name)
    cache = build_cache(sc.system)
    nh = integrate(sc.system, cache, "nonholonomic", sc.initial, cfg)
    vk = integrate(sc.system, cache, "vakonomic", sc.initial, cfg)
    for a, b in zip(nh.samples, vk.samples):
        dq = np.abs(np.subtract(a.state.q, b.state.q)).max()
        dv = np.abs(np.subtract(a.state.v, b.state.v)).max()
        yield a.t, dq, dv, b.state.mu, b.state.nu


# %% [markdown]
# For the rolling disk nu is driven away from zero at once and the paths
# separate. The reconstruction multiplier follows 1 + mu(t) = exp(delta t)
# throughout, because these constraints do not involve s.

# %%
for t, dq, dv, mu, nu in divergence("rolling_disk"):
    if round(t * 10) % 5 == 0:
        print(f"t={t:4.1f}  dq={dq:.1e}  dv={dv:.1e}  1+mu={1 + mu:.9f}  exp={math.exp(0.1 * t):.9f}  nu={np.round(nu, 6)}")

# %% [markdown]
# The sleigh separates faster, in velocity above all.

# %%
for t, dq, dv, mu, nu in divergence("chaplygin_sleigh"):
    if round(t * 10) % 5 == 0:
        print(f"t={t:4.1f}  dq={dq:.3e}  dv={dv:.3e}  nu={np.round(nu, 6)}")

# %% [markdown]
# The same comparison, written to CSV, is available from the command line:
#
#     herglotz compare --builtin chaplygin_sleigh --out sleigh
