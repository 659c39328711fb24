"""Learn which words users find sensitive without trusting any single report.

Each simulated user flips their bits with probability p before reporting.
The server still recovers the counts, and the exact error distribution says
how far off the estimate can be.

Run: python demos/keyword_survey.py
"""
import numpy as np

from voicemask import praka

vocab = ["loan", "therapy", "divorce", "weather", "lunch"]
truth = {"loan": 3100, "therapy": 2400, "divorce": 900, "weather": 50, "lunch": 10}
users = 10_000
rng = np.random.default_rng(0)

for p in (0.2, 0.5, 0.8):
    reports = praka.simulate_reports(vocab, truth, users, p, rng)
    print(f"p={p}: each report is {praka.verify_dp(p):.1f}-to-1 deniable "
          f"(epsilon {praka.epsilon(p):.3f})")
    for est in praka.aggregate(reports, p):
        spread = praka.error_quantile(users, truth[est.word], p, 0.95)
        print(f"  {est.word:8s} true {truth[est.word]:5d}  estimate {est.n_hat:8.1f}"
              f"  (95% within +-{spread:.0f})")
