"""Capon spectrum, DCMP interference nulling and MRC combining on an 8-element array.

Run: python3 demos/beamforming_demo.py
"""

import numpy as np

from uwbsense import array as arr

lam = 299_792_458.0 / 10e9
pos = 0.5 * lam * np.arange(8)
m = arr.simulate_snapshots(pos, lam, [-20.0, 20.0], [100.0, 100.0], 1.0, 1000, seed=0)
cov = arr.estimate_covariance(m)

grid = np.arange(-90.0, 90.25, 0.5)
spec = arr.capon_spectrum(cov, pos, lam, grid).samples
top = grid[np.argsort(spec)[::-1]]
peaks = sorted({float(top[0]), float(next(a for a in top if abs(a - top[0]) > 5))})
print(f"Capon peaks at {peaks} deg (sources at -20, 20)")

w = arr.dcmp_weights(cov, 20.0, pos, lam)
look = arr.array_response(w, pos, lam, 20.0)
jam = arr.array_response(w, pos, lam, -20.0)
print(f"DCMP steered to 20 deg: gain {abs(look):.6f}, interferer at -20 deg down {-20 * np.log10(abs(jam)):.1f} dB")

y = arr.mrc_combine(m)
print(f"MRC output power {np.mean(abs(y.samples) ** 2):.1f} vs single element "
      f"{np.mean(abs(m.snapshots[0]) ** 2):.1f}")
