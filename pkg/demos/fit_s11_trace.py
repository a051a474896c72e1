"""Reading a frequency shift off a noisy reflection trace.

Two synthetic S11 traces, one bare and one pulled by 25 kHz, are fitted; the
difference of the fitted resonances recovers the pull.
"""
from heliotrap.response import ResonatorParams, fit_s11, s11_model, synthesize_trace

truth = ResonatorParams()
sigma = 0.01 * abs(1 - s11_model(truth.f_r, truth))
guess = ResonatorParams(f_r=truth.f_r + 200e3, Q_i=5000, Q_c=5500, theta=0.1,
                        lumped_tolerance=None)
span = 6 * truth.f_r / truth.q_t
fits = {}
for shift, seed in ((0.0, 1), (-25e3, 2)):
    trace = synthesize_trace(truth, shift, f_span=span, n_points=40001, noise_sigma=sigma, seed=seed)
    fits[shift] = fit_s11(trace, guess)
    p = fits[shift].params
    print(f"injected {shift / 1e3:+6.1f} kHz: f_r = {p.f_r / 1e9:.7f} GHz, Q_i = {p.Q_i:.0f}, "
          f"Q_c = {p.Q_c:.0f}, rms residual {fits[shift].residual_rms:.2e}")
step = fits[-25e3].params.f_r - fits[0.0].params.f_r
print(f"recovered shift {step / 1e3:.3f} kHz")
