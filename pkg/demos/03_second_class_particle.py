"""The second-class particle and the microscopic shape of the shock.

Two coupled walls that differ by a single unit at site Q(t) define a
tracer. Seen from the tracer, the product measure with theta_left = 1 and
theta_right = 0 is stationary, so the tracer moves at the deterministic
speed

    v = E[r(w_0 + 1) - r(w_0)] - E[r(-w_0) - r(-w_0 - 1)] = e + 1/e - 2,

which is also the shock speed s. Just behind the tracer the slope law is the
law in front of it shifted by one.

Run:  python demos/03_second_class_particle.py     (about 20 seconds)
"""

import numpy as np

from bricklayers import gibbs, rates, tracer

rf = rates.make_ebl(1.0)
left, right = gibbs.build_marginal(rf, 1.0), gibbs.build_marginal(rf, 0.0)
print(f"analytic tracer speed {tracer.analytic_tracer_speed(rf, right):.9f}")
print(f"shock speed           {gibbs.rh_speed(rf, 1.0, 0.0):.9f}")

state = tracer.TracerFrameState.from_product_measure(rf, 1.0, 0.0, 64, np.random.default_rng(0))
est = tracer.measure_tracer_speed(state, 1e4, np.random.default_rng(1))
print(f"simulated (t = 10^4)  {est.v_hat:.4f} +- {est.stderr:.4f} "
      f"({est.right_jumps} right and {est.left_jumps} left jumps)")

samples = tracer.collect_frame_samples(state, np.random.default_rng(2), 100_000)
rep = tracer.shifted_marginal_check(samples, left, right)
print("\nslope laws next to the tracer")
print("   z   law(w_-1)   law(w_0 + 1)   mu^(1)")
for z in range(-2, 5):
    p_m1 = np.mean(samples[:, 1] == z)
    p_0 = np.mean(samples[:, 2] + 1 == z)
    print(f"  {z:+d}   {p_m1:.4f}      {p_0:.4f}         {left.pmf_at(z):.4f}")
print(f"TV(w_-1, w_0 + 1) = {rep.tv_left_vs_shifted_right:.4f}, TV(w_0, mu^(0)) = {rep.tv_right_exact:.4f}")
print(f"correlation of (w_-2, w_2): {rep.corr_far:+.4f} ({rep.corr_z:+.1f} standard errors)")
