"""
Checking well-posedness hypotheses for a coefficient family
===========================================================

A coefficient family is admissible when the drift grows at most like
||x||^2 log||x|| outside a ball (H2), the inverse squared dispersion is
bounded on some window around the starting region (H3), and the
degeneracy exponent leaves room for a pair of integrability exponents
(H4).  This script walks one good family and one bad one through the
same checks the CLI runs.
"""

import numpy as np

from degensde import (
    CoefficientError,
    CubicDriftFamily,
    PowerLawFamily,
    admissible_alpha_bound,
    check_h2,
    check_h3_window,
    eval_all,
    select_exponents,
)


def main():
    # A dispersion that vanishes like ||x||^(alpha/2) at the origin.
    # The alpha budget shrinks with the dimension.
    dim = 3
    alpha = 0.3
    print(f"admissible alpha bound for d={dim}: {admissible_alpha_bound(dim):.6g}")

    family = PowerLawFamily(dim=dim, alpha=alpha).build()
    print(f"family: {family.name}")

    # Evaluate everything at one point to see the moving parts.
    record = eval_all(family, [1.0, 0.0, 0.0])
    print(f"dispersion at e1: {record.dispersion_scale:.6g}")
    print(f"diffusion matrix at e1:\n{record.diffusion_matrix}")

    # H2: sampled radial growth of the drift and diffusion trace.
    h2 = check_h2(family, 1)
    print(
        f"H2 feasible: {h2.feasible}, M* = {h2.m_star:.6g} "
        f"({h2.n_samples} samples out to r = {h2.r_max:g})"
    )

    # H3: bounds for psi = dispersion^(-2) on a window away from the
    # degeneracy point.
    center = np.array([2.0, 0.0, 0.0])
    h3 = check_h3_window(family, center, 0.5)
    print(f"H3 on ball(2e1, 1/2): {h3.inf_psi:.6g} <= psi <= {h3.sup_psi:.6g}")

    # H4: pick integrability exponents inside the admissible intervals.
    sel = select_exponents(dim, alpha, 1.0)
    print(
        f"H4 exponents: q = {sel.q:g} in {sel.q_interval}, "
        f"q_tilde = {sel.q_tilde:.6g} in "
        f"({sel.q_tilde_interval[0]:.6g}, {sel.q_tilde_interval[1]:.6g})"
    )

    # The cubic drift control violates H2, and the checker produces a
    # concrete witness point.
    cubic = CubicDriftFamily(dim=dim).build()
    h2_bad = check_h2(cubic, 1)
    witness = np.round(h2_bad.witness, 3)
    print(
        f"cubic drift control: feasible = {h2_bad.feasible}, "
        f"worst ratio {h2_bad.witness_ratio:.3g} at x = {witness.tolist()}"
    )

    # Boundary exponents are rejected outright, not silently clipped.
    try:
        select_exponents(dim, admissible_alpha_bound(dim), 1.0)
    except CoefficientError as exc:
        print(f"boundary alpha rejected: {exc}")


if __name__ == "__main__":
    main()
