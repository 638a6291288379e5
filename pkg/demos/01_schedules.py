"""
Mixing-weight schedules
=======================

Realize the four decay shapes and the shipped defaults, and show how the
weight vector reacts to each of the four control parameters.
"""

import numpy as np

from lamsedit import SchedulerSpec, make_schedule

# The two shipped defaults: a logistic curve for attention mixing that decays
# over the whole run, and a stepped latent-mixing schedule that cuts to zero
# after the first ten iterations.
wa = make_schedule(SchedulerSpec.default_attention(), 50)
wz = make_schedule(SchedulerSpec.default_latent(), 50)
print("default attention weights:", np.round(wa.weights[:12], 4), "...")
print("default latent weights:   ", np.round(wz.weights[:12], 4), "...")

# Same bounds and horizon, four shapes.
for decay in ("stepped", "linear", "negexp", "logistic"):
    spec = SchedulerSpec(start=0.8, end=0.2, until=10, decay=decay)
    schedule = make_schedule(spec, 20)
    print(f"{decay:>9}: {np.round(schedule.weights, 3)}")

# `until` moves the knee; start/end move the plateau heights.
for until in (5, 10, 20):
    spec = SchedulerSpec(start=0.6, end=0.0, until=until, decay="stepped")
    print(f"until={until:>2}:", make_schedule(spec, 20).weights)

# Optional: plot all four shapes next to each other.
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    for decay in ("stepped", "linear", "negexp", "logistic"):
        schedule = make_schedule(SchedulerSpec(0.8, 0.2, 30, decay), 50)
        ax.plot(schedule.weights, label=decay)
    ax.set_xlabel("denoising iteration")
    ax.set_ylabel("mixing weight")
    ax.legend()
    fig.tight_layout()
    fig.savefig("schedules.png", dpi=120)
    print("wrote schedules.png")
except ImportError:
    print("matplotlib not installed; skipping the plot")
