"""Hydrogen-like limit of the pseudorelativistic operator.

With one electron there is no Hartree or exchange term, so the lowest
eigenvalue of ``alpha^-1 (T - Z/|x|)`` should sit near the nonrelativistic
``-Z^2/2`` hartree.  The relativistic shift is of order ``(Z alpha)^2`` and
is far below the error of a coarse grid, so the printed gap is mostly
discretization of the nuclear cusp.

Run with ``python3 demos/hydrogen_limit.py`` (about a minute).
"""

from prhf import Grid3, Physics
from prhf.scf import ScfConfig, solve

ALPHA = 1.0 / 137.0


def main() -> None:
    for n, L in ((32, 20.0), (48, 20.0)):
        grid = Grid3(n, L)
        state, report = solve(grid, Physics(ALPHA, 1.0, 1), ScfConfig(tol_residual=1e-7))
        eps = state.epsilons_hartree[0]
        print(f"n = {n:3d}  h = {grid.spacing:.3f}  eps = {eps:+.6f} Ha  "
              f"error vs -0.5 = {abs(eps + 0.5) / 0.5:.2%}  iterations = {report.iterations}")


if __name__ == "__main__":
    main()
