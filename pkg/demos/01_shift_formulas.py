"""Closed-form shifts and decoherence rates of the driven atom.

Sweeps the Zeeman-shift difference and the drive strength, prints the
shift report at the standard operating point, and compares the Poisson
average over jump number against a direct Monte Carlo sample.
"""
import math

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

import qbeats as qb

TWO_PI = 2 * math.pi

params = qb.PhysicalParams(delta_g=TWO_PI * 1.0e6, delta_e=TWO_PI * 1.6e6,
                           drive_amplitude=math.sqrt(0.55))

print("operating point: |alpha|^2 = 0.55, delta/2pi = "
      f"{params.delta / TWO_PI / 1e6:.2f} MHz")
report = qb.shift_report(params)
for key, value in report.as_dict().items():
    print(f"  {key:14s} = {value:.6g}")

# shift and decoherence vs detuning at fixed drive
deltas = np.linspace(0, 0.5, 200) * params.gamma
ac, jump, decoh = [], [], []
for d in deltas:
    p = params.with_(delta_e=params.delta_g + d)
    ac.append(qb.ac_stark_shift(p))
    jump.append(qb.jump_shift(p))
    decoh.append(qb.decoherence_rate(p))

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
ax1.plot(deltas / params.gamma, np.array(ac) / TWO_PI / 1e3, label="AC Stark")
ax1.plot(deltas / params.gamma, np.array(jump) / TWO_PI / 1e3, label="jump shift")
ax1.plot(deltas / params.gamma, (np.array(ac) + np.array(jump)) / TWO_PI / 1e3,
         label="light shift", ls="--")
ax1.set_xlabel(r"$\Delta/\gamma$")
ax1.set_ylabel("shift (kHz)")
ax1.legend()

# Poisson-averaged coherence vs the sampled average
p = params.with_(delta_e=params.delta_g + 0.3 * params.gamma)
rate = qb.jump_rate(p)
ts = np.linspace(0, 3.0 / rate, 60)
exact = np.array([qb.poisson_coherence(t, p) for t in ts])
rng = np.random.default_rng(0)
z = qb.pair_jump_factor(p, "plus_minus")
mc = np.array([np.mean(z ** rng.poisson(rate * t, size=20000)) for t in ts])
ax2.plot(ts * 1e6, np.abs(exact), label="closed form |E z^n|")
ax2.plot(ts * 1e6, np.abs(mc), ".", ms=3, label="Monte Carlo, 2e4 draws")
ax2.set_xlabel("time (us)")
ax2.set_ylabel("coherence magnitude")
ax2.legend()
fig.tight_layout()
fig.savefig("demo01_shifts.png", dpi=130)
print("wrote demo01_shifts.png")
