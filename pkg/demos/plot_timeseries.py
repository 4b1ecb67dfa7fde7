"""Plot energies and chord densities from a run's timeseries.csv (needs matplotlib).

    python demos/plot_timeseries.py demos/formation_output/timeseries.csv out.png
"""

import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from axifem.diagnostics import RECORD_COLUMNS, read_timeseries

data = read_timeseries(sys.argv[1])
t_us = data["t"] * 1e6
extra = [k for k in data if k not in RECORD_COLUMNS]

fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6, 6))
for key in ("U_K", "U_Th", "U_M"):
    ax1.plot(t_us, data[key], label=key)
ax1.set_ylabel("energy (J)")
ax1.legend()
for key in extra:
    ax2.plot(t_us, data[key], label=key)
ax2.set_xlabel("t (μs)")
ax2.set_ylabel("probe / chord value")
ax2.legend()
fig.tight_layout()
fig.savefig(sys.argv[2] if len(sys.argv) > 2 else "timeseries.png", dpi=100)
