"""Cross-validated prediction error over a lambda1 x lambda2 grid.

Runs on a two-city scenario, where the hidden latent dimension is a smooth
function of location and so can be predicted at held-out sites.

    python scripts/cv_grid.py --jobs 4
"""

import argparse

import numpy as np

from dimexp.expansion import ExpansionConfig
from dimexp.prediction import cross_validate, geographic_cv_rmse
from dimexp.simulate import cities_scenario, latent_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--s", type=int, default=80)
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    a = ap.parse_args()

    ss = np.random.SeedSequence(a.seed).spawn(2)
    X, hidden = cities_scenario(a.s, int(ss[0].generate_state(1)[0]))
    Y = latent_scenario(X, hidden, a.n, int(ss[1].generate_state(1)[0]), range_=0.7)
    l1 = [0.1, 1.0, 10.0, 10**4.5]
    l2 = [1e-4, 1e-2, 1.0]
    grid = cross_validate(X, Y, l1, l2, k=a.k, seed=a.seed, cfg=ExpansionConfig(p_max=2),
                          lambda2_units="normalized", jobs=a.jobs)
    print("rmse (rows lambda1, columns lambda2 =", l2, ")")
    for lam, row in zip(l1, grid.rmse):
        print(f"  {lam:<10g}", " ".join(f"{r:.4f}" for r in row))
    print("geographic kriging:", round(geographic_cv_rmse(X, Y, a.k, a.seed), 4))
    print("argmin:", grid.argmin)


if __name__ == "__main__":
    main()
