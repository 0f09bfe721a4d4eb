"""Lyapunov spectrum of a random triangular cocycle under two quadratic norms.

The diagonal Birkhoff averages are the exact answer for this model.

    python3 demos/matrix_spectrum.py [--steps 5000]
"""
import argparse

import numpy as np

from lyapnorm.geometry import FiniteNorm
from lyapnorm.lyapunov import leading_spectrum
from lyapnorm.matrix_models import TriangularCocycle

A = [0.5, 0.1, -0.3, -0.8]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()

    oracle = TriangularCocycle(A, a.seed).birkhoff_exponents(a.steps, a.steps // 5)
    print("diagonal averages:", np.round(oracle, 4))
    for w in ([1, 1, 1, 1], [1, 3, 10, 30]):
        norm = FiniteNorm.quadratic(np.array(w, float), name=f"w={w}")
        rec = leading_spectrum(TriangularCocycle(A, a.seed), norm, len(A), a.steps, seed=a.seed)
        print(f"{norm.name:>18}:", np.round(rec.lambdas, 4))


if __name__ == "__main__":
    main()
