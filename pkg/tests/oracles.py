"""Independent reference computations used by the tests."""

import numpy as np
from scipy.optimize import linprog


def lp_envelope(pts, f):
    """Least concave majorant at every node by linear programming.

    ``env(x_k) = max sum_i w_i f_i`` over ``w >= 0`` with ``sum w_i = 1`` and
    ``sum w_i x_i = x_k``.
    """
    n = len(f)
    a_eq = np.vstack([np.ones(n), pts.T])
    out = np.empty(n)
    for k in range(n):
        res = linprog(-f, A_eq=a_eq, b_eq=np.r_[1.0, pts[k]], bounds=(0, None), method="highs",
                      options={"primal_feasibility_tolerance": 1e-10,
                               "dual_feasibility_tolerance": 1e-10})
        assert res.status == 0, res.message
        out[k] = -res.fun
    return out
