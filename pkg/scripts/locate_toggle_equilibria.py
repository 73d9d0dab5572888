"""Locate and classify the equilibria of the toggle-switch model."""
import numpy as np
from scipy.optimize import fsolve

from koopman_uq.dynamics import toggle_switch


def jacobian(f, x, h=1e-7):
    J = np.empty((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        J[:, j] = (f(x + e) - f(x - e)) / (2 * h)
    return J


def main():
    sys = toggle_switch()
    roots = []
    for guess in ([0.15, 2.0], [2.0, 0.15], [1.0, 1.0]):
        x = fsolve(sys.rhs, guess, xtol=1e-14)
        if not any(np.allclose(x, r, atol=1e-8) for r in roots):
            roots.append(x)
    for x in roots:
        eig = np.linalg.eigvals(jacobian(sys.rhs, x))
        kind = "stable" if np.all(eig.real < 0) else "saddle" if np.prod(eig.real) < 0 else "unstable"
        print(f"({x[0]:.4f}, {x[1]:.4f})  eigenvalues {np.round(eig, 4)}  {kind}")


if __name__ == "__main__":
    main()
