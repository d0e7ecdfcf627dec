"""CS-EWA hot loops: batched NLL with analytic gradient, and batched logits.

Forward-mode derivatives with respect to the six unconstrained parameters
are carried through the table updates and the forecast/act readout.  The
transformed parameters each depend on exactly one raw parameter, so their
seed gradients are one-hot:

    index 0 alpha, 1 alpha', 2 phi, 3 delta, 4 rho (sigmoid), 5 beta (softplus)
"""

from __future__ import annotations

import math

import numpy as np

from .._accel import njit


@njit
def sigmoid(x):
    if x >= 0.0:
        z = math.exp(-x)
        return 1.0 / (1.0 + z)
    z = math.exp(x)
    return z / (1.0 + z)


@njit
def softplus(x):
    if x > 30.0:
        return x
    if x < -30.0:
        return math.exp(x)
    return math.log1p(math.exp(x))


@njit
def _update_row(A, dA, Nw, dN, s, chosen, R, other, phi, delta, rho, dphi, ddelta, drho):
    """Standard EWA update of one context row, propagating derivatives.

    payoff vector: R[j, other] for j in actions.
    """
    n_old = Nw[s]
    n_new = rho * n_old + 1.0
    for j in range(3):
        pay = R[j, other]
        w = 1.0 if j == chosen else delta
        a_old = A[s, j]
        num = phi * n_old * a_old + w * pay
        a_new = num / n_new
        for p in range(6):
            gn_old = dN[s, p]
            gn_new = rho * gn_old + (drho * n_old if p == 4 else 0.0)
            gphi = dphi if p == 2 else 0.0
            gw = 0.0 if j == chosen else (ddelta if p == 3 else 0.0)
            gnum = gphi * n_old * a_old + phi * gn_old * a_old + phi * n_old * dA[s, j, p] + gw * pay
            dA[s, j, p] = (gnum - a_new * gn_new) / n_new
        A[s, j] = a_new
    for p in range(6):
        dN[s, p] = rho * dN[s, p] + (drho * n_old if p == 4 else 0.0)
    Nw[s] = n_new


@njit
def _softmax3_grad(x, gx, y, gy):
    m = x[0]
    if x[1] > m:
        m = x[1]
    if x[2] > m:
        m = x[2]
    e0 = math.exp(x[0] - m)
    e1 = math.exp(x[1] - m)
    e2 = math.exp(x[2] - m)
    se = e0 + e1 + e2
    y[0] = e0 / se
    y[1] = e1 / se
    y[2] = e2 / se
    for p in range(gx.shape[1]):
        sbar = y[0] * gx[0, p] + y[1] * gx[1, p] + y[2] * gx[2, p]
        for j in range(3):
            gy[j, p] = y[j] * (gx[j, p] - sbar)


@njit
def _probs_at(
    s, R, A_self, dA_self, A_shad, dA_shad,
    alpha, aprime, beta, dalpha, daprime, dbeta,
    x, gx, sigma_self, gsigma_self, pi_soph, gpi_soph,
    pi_shad, gpi_shad, p_br, gp_br, buf, gbuf, probs, gprobs,
):
    """Choice probabilities (and derivatives) at context s; buffers reused."""
    ng = gx.shape[1]
    # adaptive policy from the self table
    for j in range(3):
        x[j] = beta * A_self[s, j]
        for p in range(ng):
            gx[j, p] = beta * dA_self[s, j, p] + (dbeta * A_self[s, j] if p == 5 else 0.0)
    _softmax3_grad(x, gx, sigma_self, gsigma_self)
    # sophisticated-opponent hypothesis: opponent best-responds to our policy
    for j in range(3):
        ev = R[j, 0] * sigma_self[0] + R[j, 1] * sigma_self[1] + R[j, 2] * sigma_self[2]
        buf[j] = ev
        x[j] = beta * ev
        for p in range(ng):
            gev = R[j, 0] * gsigma_self[0, p] + R[j, 1] * gsigma_self[1, p] + R[j, 2] * gsigma_self[2, p]
            gbuf[j, p] = gev
            gx[j, p] = beta * gev + (dbeta * ev if p == 5 else 0.0)
    _softmax3_grad(x, gx, pi_soph, gpi_soph)
    # adaptive-opponent hypothesis from the shadow table
    for j in range(3):
        x[j] = beta * A_shad[s, j]
        for p in range(ng):
            gx[j, p] = beta * dA_shad[s, j, p] + (dbeta * A_shad[s, j] if p == 5 else 0.0)
    _softmax3_grad(x, gx, pi_shad, gpi_shad)
    # forecast mixture, then best response to it
    for j in range(3):
        buf[j] = aprime * pi_shad[j] + (1.0 - aprime) * pi_soph[j]
        for p in range(ng):
            gbuf[j, p] = (
                aprime * gpi_shad[j, p]
                + (1.0 - aprime) * gpi_soph[j, p]
                + (daprime * (pi_shad[j] - pi_soph[j]) if p == 1 else 0.0)
            )
    for j in range(3):
        ev = R[j, 0] * buf[0] + R[j, 1] * buf[1] + R[j, 2] * buf[2]
        x[j] = beta * ev
        for p in range(ng):
            gev = R[j, 0] * gbuf[0, p] + R[j, 1] * gbuf[1, p] + R[j, 2] * gbuf[2, p]
            gx[j, p] = beta * gev + (dbeta * ev if p == 5 else 0.0)
    _softmax3_grad(x, gx, p_br, gp_br)
    # population mixture of adaptive and sophisticated strategies
    for j in range(3):
        probs[j] = alpha * sigma_self[j] + (1.0 - alpha) * p_br[j]
        for p in range(ng):
            gprobs[j, p] = (
                alpha * gsigma_self[j, p]
                + (1.0 - alpha) * gp_br[j, p]
                + (dalpha * (sigma_self[j] - p_br[j]) if p == 0 else 0.0)
            )


@njit
def _reset_tables(A_self, dA_self, A_shad, dA_shad, N_self, dN_self, N_shad, dN_shad):
    n_ctx = A_self.shape[0]
    ng = dA_self.shape[2]
    for s in range(n_ctx):
        N_self[s] = 1.0
        N_shad[s] = 1.0
        for j in range(3):
            A_self[s, j] = 0.0
            A_shad[s, j] = 0.0
            for p in range(ng):
                dA_self[s, j, p] = 0.0
                dA_shad[s, j, p] = 0.0
        for p in range(ng):
            dN_self[s, p] = 0.0
            dN_shad[s, p] = 0.0


@njit
def _csewa_run(theta, R, ego, opp, weights, want_grad, out_logits, want_logits):
    N, T = ego.shape
    ng = 6 if want_grad != 0 else 0
    n_ctx = 81

    alpha = sigmoid(theta[0])
    aprime = sigmoid(theta[1])
    phi = sigmoid(theta[2])
    delta = sigmoid(theta[3])
    rho = sigmoid(theta[4])
    beta = softplus(theta[5])
    dalpha = alpha * (1.0 - alpha)
    daprime = aprime * (1.0 - aprime)
    dphi = phi * (1.0 - phi)
    ddelta = delta * (1.0 - delta)
    drho = rho * (1.0 - rho)
    dbeta = sigmoid(theta[5])

    A_self = np.zeros((n_ctx, 3))
    A_shad = np.zeros((n_ctx, 3))
    dA_self = np.zeros((n_ctx, 3, ng))
    dA_shad = np.zeros((n_ctx, 3, ng))
    N_self = np.ones(n_ctx)
    N_shad = np.ones(n_ctx)
    dN_self = np.zeros((n_ctx, ng))
    dN_shad = np.zeros((n_ctx, ng))

    x = np.zeros(3)
    gx = np.zeros((3, ng))
    sigma_self = np.zeros(3)
    gsigma_self = np.zeros((3, ng))
    pi_soph = np.zeros(3)
    gpi_soph = np.zeros((3, ng))
    pi_shad = np.zeros(3)
    gpi_shad = np.zeros((3, ng))
    p_br = np.zeros(3)
    gp_br = np.zeros((3, ng))
    buf = np.zeros(3)
    gbuf = np.zeros((3, ng))
    probs = np.zeros(3)
    gprobs = np.zeros((3, ng))

    nll = 0.0
    grad = np.zeros(6)
    log3 = math.log(3.0)

    for i in range(N):
        _reset_tables(A_self, dA_self, A_shad, dA_shad, N_self, dN_self, N_shad, dN_shad)
        h0 = -1
        h1 = -1
        h2 = -1
        h3 = -1
        sidx = -1
        if want_logits != 0:
            for k in range(3):
                out_logits[i, 0, k] = 0.0
        for t in range(T - 1):
            a = ego[i, t]
            ao = opp[i, t]
            if sidx >= 0:
                _update_row(A_self, dA_self, N_self, dN_self, sidx, a, R, ao, phi, delta, rho, dphi, ddelta, drho)
                _update_row(A_shad, dA_shad, N_shad, dN_shad, sidx, ao, R, a, phi, delta, rho, dphi, ddelta, drho)
            h0 = h2
            h1 = h3
            h2 = a
            h3 = ao
            sidx = -1 if h0 < 0 else ((h0 * 3 + h1) * 3 + h2) * 3 + h3
            tgt = ego[i, t + 1]
            w = weights[i, t + 1]
            if sidx < 0:
                nll += w * log3
                if want_logits != 0:
                    for k in range(3):
                        out_logits[i, t + 1, k] = 0.0
            else:
                _probs_at(
                    sidx, R, A_self, dA_self, A_shad, dA_shad,
                    alpha, aprime, beta, dalpha, daprime, dbeta,
                    x, gx, sigma_self, gsigma_self, pi_soph, gpi_soph,
                    pi_shad, gpi_shad, p_br, gp_br, buf, gbuf, probs, gprobs,
                )
                nll -= w * math.log(probs[tgt])
                for p in range(ng):
                    grad[p] -= w * gprobs[tgt, p] / probs[tgt]
                if want_logits != 0:
                    for k in range(3):
                        out_logits[i, t + 1, k] = math.log(probs[k])
    return nll, grad


@njit
def csewa_nll_grad(theta, R, ego, opp, weights):
    dummy = np.zeros((1, 1, 3))
    return _csewa_run(theta, R, ego, opp, weights, 1, dummy, 0)


@njit
def csewa_logits(theta, R, ego, opp):
    N, T = ego.shape
    out = np.zeros((N, T, 3))
    weights = np.ones((N, T))
    _csewa_run(theta, R, ego, opp, weights, 0, out, 1)
    return out
