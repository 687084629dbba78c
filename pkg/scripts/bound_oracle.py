"""Hand evaluation of the closed-form bound terms with nothing but ``math``.

Kept independent of the package so the tests can compare the library's
arithmetic against a second evaluation. Run it to print the spot values.
"""

import json
import math


def linear_terms(n, m, lam, mu_x, R, sigma, C):
    complexity = 96 * math.sqrt(mu_x * lam * R * (1 + mu_x * lam) / n)
    diameter = 12 * C * math.sqrt(math.pi) * (m + 2 * mu_x) / math.sqrt(n)
    confidence = (m + lam * mu_x) * math.sqrt(math.log(1 / sigma) / (2 * n))
    return complexity, diameter, confidence


def mlp_confidence(n, m, sigma):
    return 2 * m * math.sqrt(math.log(1 / sigma) / (2 * n))


def mlp_complexity(n, m, prefactor_dim, lam_last, R, widths, lams, Cs):
    s = 0.0
    for r_i, d_i, l_i, c_i in zip(R, widths, lams, Cs):
        s += r_i * math.sqrt(d_i * l_i * c_i)
    return 96 * math.sqrt(prefactor_dim * m * lam_last) * s / math.sqrt(n)


def mlp_diameter(n, m, mu_x, C):
    return 12 * C * (2 * mu_x + m) * math.sqrt(math.pi) / math.sqrt(n)


SPOTS = {
    "linear_complexity": linear_terms(100, 2, 1, 1, 1, 0.1, 1)[0],
    "linear_diameter": linear_terms(100, 2, 1, 1, 1, 0.1, 1)[1],
    "linear_confidence": linear_terms(100, 2, 1, 1, 1, 0.1, 1)[2],
    "mlp_confidence": mlp_confidence(200, 4, 0.5),
}

if __name__ == "__main__":
    print(json.dumps(SPOTS, indent=1))
