"""Post-selection on the number of undetected scattering events.

The simulation tags every side emission, so conditioning detections can be
kept only when few scattering events follow them.  The surviving subset
shows slower beats (smaller accumulated jump shift) and less damping.
"""
import math
import time

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

import qbeats as qb
from qbeats.records import Channel

TWO_PI = 2 * math.pi
BOTH = (Channel.H_DET_A, Channel.H_DET_B)

N_TRAJ = 150
DURATION = 500e-6
MAX_JUMPS = 14

params = qb.PhysicalParams(delta_g=TWO_PI * 1.0e6, delta_e=TWO_PI * 1.9e6,
                           drive_amplitude=math.sqrt(0.55))
window = 300.0 / params.gamma  # 300 atomic lifetimes

t0 = time.time()
cfg = qb.TrajectoryConfig(duration=DURATION, seed=40)
ens = qb.run_ensemble(params, cfg, N_TRAJ, jobs=2)
offs = [i * int(round(DURATION * 1e9)) for i in range(N_TRAJ)]
record = qb.merge_records(ens.records, offs)
print(f"simulated in {time.time()-t0:.0f} s")

filtered = qb.filter_by_jump_count(record, MAX_JUMPS, window,
                                   start_channels=BOTH)
n_all = len(record.channel_times_ns(BOTH))
print(f"conditioning events: {n_all}, surviving the cap of "
      f"{MAX_JUMPS} events in {window*1e6:.2f} us: {len(filtered.starts)} "
      f"({100*len(filtered.starts)/n_all:.1f} percent)")

kw = dict(bin_width=10e-9, tau_max=6e-6)
corr_all = qb.g2_estimate(record, BOTH, BOTH, **kw)
corr_sel = qb.g2_estimate(filtered, BOTH, BOTH, **kw)
for label, corr in (("all", corr_all), ("post-selected", corr_sel)):
    fit = qb.fit_damped_cosine(corr, tau_range=(0.5e-6, 6e-6))
    fpk, _ = qb.spectrum_peak(*qb.fft_spectrum(corr), f_min=0.5e6)
    print(f"  {label:14s} f = {fit.freq/TWO_PI/1e6:.4f} MHz "
          f"(FFT peak {fpk/1e6:.4f}), decay = {fit.decay*1e-6:.3f} /us")

fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6))
ax1.plot(corr_all.tau * 1e6, corr_all.g2, "k-", lw=1, label="all events")
ax1.plot(corr_sel.tau * 1e6, corr_sel.g2, "--", color="0.5", lw=1,
         label=f"< {MAX_JUMPS} side emissions")
ax1.set_xlabel(r"$\tau$ (us)")
ax1.set_ylabel(r"$g^{(2)}(\tau)$")
ax1.legend()
for corr, style, label in ((corr_all, "k-", "all"),
                           (corr_sel, "--", "post-selected")):
    freqs, power = qb.fft_spectrum(corr)
    ax2.plot(freqs / 1e6, power / power.max(), style, lw=1, label=label)
ax2.set_xlim(0, 6)
ax2.set_xlabel("frequency (MHz)")
ax2.set_ylabel("power (norm.)")
ax2.legend()
fig.tight_layout()
fig.savefig("demo04_postselection.png", dpi=130)
print("wrote demo04_postselection.png")
