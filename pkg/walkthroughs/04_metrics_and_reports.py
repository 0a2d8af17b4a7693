"""
Skill metrics and run comparison
================================

The four metrics are peak force, force integral, tremor-band spectral
content, and completion time. We compute them for a synthetic trace, then
compare two batches of oracle episodes on different anatomies.
"""

import numpy as np

from canalrl.env import CanalAnatomy
from canalrl.evaluate import evaluate
from canalrl.metrics import (ForceSeries, compare_reports, force_fft_band, format_comparison,
                             integral_force, max_force)

# 20 s at 50 Hz: a steady 1 N push with a 5 Hz wobble of amplitude 0.5 N.
t = np.arange(1000) / 50.0
series = ForceSeries.uniform(1.0 + 0.5 * np.sin(2 * np.pi * 5 * t))
print("F_max:", max_force(series))
print("F_i:  ", round(integral_force(series), 4))
print("F_FFT:", round(force_fft_band(series), 6))  # the wobble amplitude

# A 20 Hz wobble falls outside the 1-13 Hz band.
fast = ForceSeries.uniform(1.0 + 0.5 * np.sin(2 * np.pi * 20 * t))
print("F_FFT of 20 Hz wobble:", round(force_fft_band(fast), 9))

# Oracle runs on a gentle and a sharp bend.
gentle = evaluate(CanalAnatomy(flexion_angle_deg=170.0), 20, seed=0, label="gentle").report
sharp = evaluate(CanalAnatomy(flexion_angle_deg=130.0), 20, seed=0, label="sharp").report
print(format_comparison(compare_reports([gentle, sharp])))
