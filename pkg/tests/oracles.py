"""Independent reference computations shared by the test modules."""
import itertools
import math

import mpmath
import numpy as np
import sympy


def random_rational_stochastic(rng, n):
    weights = rng.integers(1, 10, size=(n, n))
    return sympy.Matrix(n, n, lambda i, j: sympy.Rational(int(weights[i, j]), int(weights[i].sum())))


def charpoly_root_moduli(matrix: sympy.Matrix) -> np.ndarray:
    """Moduli of the characteristic-polynomial roots, via exact coefficients
    and mpmath's Durand-Kerner solver (no LAPACK involved)."""
    lam = sympy.Symbol("lam")
    coeffs = matrix.charpoly(lam).all_coeffs()
    with mpmath.workdps(50):
        roots = mpmath.polyroots([mpmath.mpf(c.p) / c.q for c in coeffs], maxsteps=500, extraprec=200)
        moduli = sorted((float(abs(r)) for r in roots), reverse=True)
    return np.array(moduli)


def enumerate_trajectories(mu, P, r, policy, horizon):
    """Yield ``(probability, [(s, a, reward), ...])`` for every length-``horizon`` path."""
    n_states, n_actions = r.shape
    for path in itertools.product(range(n_states), range(n_actions), repeat=horizon):
        states, actions = path[0::2], path[1::2]
        prob = mu[states[0]]
        for k in range(horizon):
            prob *= policy[states[k], actions[k]]
            if k + 1 < horizon:
                prob *= P[states[k], actions[k], states[k + 1]]
        if prob > 0:
            yield prob, [(states[k], actions[k], r[states[k], actions[k]]) for k in range(horizon)]


def softmax_jacobian(policy):
    """d pi(a|s) / d theta[s, b] = pi(a|s) (1[a=b] - pi(b|s)), shape (S, A, A)."""
    return np.einsum("sa,ab->sab", policy, np.eye(policy.shape[1])) - np.einsum(
        "sa,sb->sab", policy, policy
    )


def finite_horizon_gradient(mu, P, r, theta, gamma, horizon):
    """Analytic gradient of ``E[sum_{t<H} gamma^t r(s_t, a_t)]`` w.r.t. tabular logits.

    Uses the policy-gradient theorem with exact finite-horizon Q tables from
    backward induction:  grad = sum_t gamma^t sum_s d_t(s) sum_a dpi(a|s) Q_{H-t}(s, a).
    """
    z = theta - theta.max(axis=1, keepdims=True)
    policy = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    jac = softmax_jacobian(policy)
    P_pi = np.einsum("sat,sa->st", P, policy)

    Q = [None] * (horizon + 1)
    V_next = np.zeros(r.shape[0])
    for remaining in range(1, horizon + 1):
        Q[remaining] = r + gamma * np.einsum("sat,t->sa", P, V_next)
        V_next = (policy * Q[remaining]).sum(axis=1)

    grad = np.zeros_like(theta)
    d = np.asarray(mu, dtype=float)
    for t in range(horizon):
        grad += gamma**t * d[:, None] * np.einsum("sab,sa->sb", jac, Q[horizon - t])
        d = d @ P_pi
    return grad


def mixing_bound_mp(modulus, epsilon):
    """Exact rational evaluation of the bound, rounded to float at the end."""
    lam, eps = sympy.Rational(modulus), sympy.Rational(epsilon)
    expr = (1 / (1 - lam) - 1) * sympy.log(1 / (2 * eps))
    return float(expr.evalf(30))


LN5 = math.log(5)

# fixed 2-state, 2-action MDP for the enumeration oracle
TWO_STATE_MDP = dict(
    mu=np.array([0.7, 0.3]),
    P=np.array([[[0.8, 0.2], [0.1, 0.9]], [[0.5, 0.5], [0.3, 0.7]]]),
    r=np.array([[1.0, 0.0], [0.2, 2.0]]),
    theta=np.array([[0.3, -0.4], [-1.1, 0.6]]),
)
