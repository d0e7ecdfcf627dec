"""Hot interpreter loops: tape execution with forward-mode derivatives.

One generic kernel runs every program, so numba compiles each function once
per process.  Derivatives with respect to the (at most 10) parameters are
propagated alongside values: every register carries a value buffer of 27
slots plus a gradient buffer of shape (27, P).  Calling with P=0 gradient
buffers turns all derivative work into empty loops, which is how the
value-only paths reuse the same code.

Binding conventions: actions are passed as int64 with -1 meaning
"undefined" (before the first observation).  ``do_updates=0`` evaluates the
policy only, with the reward treated as undefined; that is the pre-game
initial prediction.
"""

from __future__ import annotations

import math

import numpy as np

from .._accel import njit
from .compile import (
    OP_ADD,
    OP_CONST,
    OP_COUNTER,
    OP_DECAY,
    OP_DIV,
    OP_EMA,
    OP_INPUT_A,
    OP_INPUT_AOPP,
    OP_INPUT_CF,
    OP_INPUT_R,
    OP_MUL,
    OP_ONEHOT_A,
    OP_ONEHOT_AOPP,
    OP_PARAM,
    OP_READ,
    OP_SOFTMAX,
    OP_SUB,
    TOK_A,
    TOK_AOPP,
    TOK_FREE,
    TOK_PREV_A,
)

DIV_GUARD = 1e-8


@njit
def _sigmoid(x):
    if x >= 0.0:
        z = math.exp(-x)
        return 1.0 / (1.0 + z)
    z = math.exp(x)
    return z / (1.0 + z)


@njit
def _softplus(x):
    if x > 30.0:
        return x
    if x < -30.0:
        return math.exp(x)
    return math.log1p(math.exp(x))


@njit
def _bind(tok, a, a_opp, pa, pao):
    if tok == TOK_A:
        return a
    if tok == TOK_AOPP:
        return a_opp
    if tok == TOK_PREV_A:
        return pa
    return pao


@njit
def _run_segment(tarrs, start, end, theta, rewards, regs, gregs, state_vals, state_grads, a, a_opp, r, pa, pao):
    codes, arg1, arg2, arg3, ispec, reg_size, consts = tarrs[0], tarrs[1], tarrs[2], tarrs[3], tarrs[4], tarrs[5], tarrs[6]
    state_offset, state_rank = tarrs[10], tarrs[12]
    P = gregs.shape[2]
    for pc in range(start, end):
        op = codes[pc]
        if op == OP_CONST:
            regs[pc, 0] = consts[arg1[pc]]
            for p in range(P):
                gregs[pc, 0, p] = 0.0
        elif op == OP_PARAM:
            k = arg1[pc]
            tr = arg2[pc]
            x = theta[k]
            if tr == 1:
                v = _sigmoid(x)
                dv = v * (1.0 - v)
            elif tr == 2:
                v = _softplus(x)
                dv = _sigmoid(x)
            else:
                v = x
                dv = 1.0
            regs[pc, 0] = v
            for p in range(P):
                gregs[pc, 0, p] = dv if p == k else 0.0
        elif op == OP_INPUT_A:
            regs[pc, 0] = float(a)
            for p in range(P):
                gregs[pc, 0, p] = 0.0
        elif op == OP_INPUT_AOPP:
            regs[pc, 0] = float(a_opp)
            for p in range(P):
                gregs[pc, 0, p] = 0.0
        elif op == OP_INPUT_R:
            regs[pc, 0] = r
            for p in range(P):
                gregs[pc, 0, p] = 0.0
        elif op == OP_INPUT_CF:
            for k in range(3):
                regs[pc, k] = rewards[k, a_opp]
                for p in range(P):
                    gregs[pc, k, p] = 0.0
        elif op == OP_ONEHOT_A:
            for k in range(3):
                regs[pc, k] = 1.0 if k == a else 0.0
                for p in range(P):
                    gregs[pc, k, p] = 0.0
        elif op == OP_ONEHOT_AOPP:
            for k in range(3):
                regs[pc, k] = 1.0 if k == a_opp else 0.0
                for p in range(P):
                    gregs[pc, k, p] = 0.0
        elif op == OP_READ:
            s = arg1[pc]
            rank = state_rank[s]
            base = state_offset[s]
            off = 0
            nf = 0
            fs0 = 0
            fs1 = 0
            fs2 = 0
            for i in range(rank):
                st = 3 ** (rank - 1 - i)
                tok = ispec[pc, i]
                if tok == TOK_FREE:
                    if nf == 0:
                        fs0 = st
                    elif nf == 1:
                        fs1 = st
                    else:
                        fs2 = st
                    nf += 1
                else:
                    off += _bind(tok, a, a_opp, pa, pao) * st
            if nf == 0:
                src = base + off
                regs[pc, 0] = state_vals[src]
                for p in range(P):
                    gregs[pc, 0, p] = state_grads[src, p]
            elif nf == 1:
                for j in range(3):
                    src = base + off + j * fs0
                    regs[pc, j] = state_vals[src]
                    for p in range(P):
                        gregs[pc, j, p] = state_grads[src, p]
            elif nf == 2:
                k = 0
                for j0 in range(3):
                    for j1 in range(3):
                        src = base + off + j0 * fs0 + j1 * fs1
                        regs[pc, k] = state_vals[src]
                        for p in range(P):
                            gregs[pc, k, p] = state_grads[src, p]
                        k += 1
            else:
                k = 0
                for j0 in range(3):
                    for j1 in range(3):
                        for j2 in range(3):
                            src = base + off + j0 * fs0 + j1 * fs1 + j2 * fs2
                            regs[pc, k] = state_vals[src]
                            for p in range(P):
                                gregs[pc, k, p] = state_grads[src, p]
                            k += 1
        elif op == OP_ADD or op == OP_SUB or op == OP_MUL or op == OP_DIV:
            ls = arg1[pc]
            rs = arg2[pc]
            n = reg_size[pc]
            ln = reg_size[ls]
            rn = reg_size[rs]
            for k in range(n):
                li = k if ln > 1 else 0
                ri = k if rn > 1 else 0
                x = regs[ls, li]
                y = regs[rs, ri]
                if op == OP_ADD:
                    regs[pc, k] = x + y
                    for p in range(P):
                        gregs[pc, k, p] = gregs[ls, li, p] + gregs[rs, ri, p]
                elif op == OP_SUB:
                    regs[pc, k] = x - y
                    for p in range(P):
                        gregs[pc, k, p] = gregs[ls, li, p] - gregs[rs, ri, p]
                elif op == OP_MUL:
                    regs[pc, k] = x * y
                    for p in range(P):
                        gregs[pc, k, p] = gregs[ls, li, p] * y + x * gregs[rs, ri, p]
                else:
                    denom = abs(y) + DIV_GUARD
                    inv = 1.0 / denom
                    z = x * inv
                    regs[pc, k] = z
                    sgn = 1.0 if y > 0.0 else (-1.0 if y < 0.0 else 0.0)
                    for p in range(P):
                        gregs[pc, k, p] = (gregs[ls, li, p] - z * sgn * gregs[rs, ri, p]) * inv
        elif op == OP_EMA:
            os_ = arg1[pc]
            ns_ = arg2[pc]
            ts_ = arg3[pc]
            c = regs[ts_, 0]
            n = reg_size[pc]
            on = reg_size[os_]
            nn = reg_size[ns_]
            for k in range(n):
                oi = k if on > 1 else 0
                ni = k if nn > 1 else 0
                x = regs[os_, oi]
                y = regs[ns_, ni]
                regs[pc, k] = (1.0 - c) * x + c * y
                for p in range(P):
                    gregs[pc, k, p] = (1.0 - c) * gregs[os_, oi, p] + c * gregs[ns_, ni, p] + (y - x) * gregs[ts_, 0, p]
        elif op == OP_DECAY:
            vs = arg1[pc]
            ts_ = arg2[pc]
            c = regs[ts_, 0]
            n = reg_size[pc]
            vn = reg_size[vs]
            for k in range(n):
                vi = k if vn > 1 else 0
                x = regs[vs, vi]
                regs[pc, k] = c * x
                for p in range(P):
                    gregs[pc, k, p] = c * gregs[vs, vi, p] + x * gregs[ts_, 0, p]
        elif op == OP_COUNTER:
            src = arg1[pc]
            for k in range(3):
                j = (k + 2) % 3
                regs[pc, k] = regs[src, j]
                for p in range(P):
                    gregs[pc, k, p] = gregs[src, j, p]
        elif op == OP_SOFTMAX:
            src = arg1[pc]
            ts_ = arg2[pc]
            t = regs[ts_, 0]
            u0 = t * regs[src, 0]
            u1 = t * regs[src, 1]
            u2 = t * regs[src, 2]
            m = u0
            if u1 > m:
                m = u1
            if u2 > m:
                m = u2
            e0 = math.exp(u0 - m)
            e1 = math.exp(u1 - m)
            e2 = math.exp(u2 - m)
            se = e0 + e1 + e2
            y0 = e0 / se
            y1 = e1 / se
            y2 = e2 / se
            for p in range(P):
                gt = gregs[ts_, 0, p]
                du0 = t * gregs[src, 0, p] + regs[src, 0] * gt
                du1 = t * gregs[src, 1, p] + regs[src, 1] * gt
                du2 = t * gregs[src, 2, p] + regs[src, 2] * gt
                sbar = y0 * du0 + y1 * du1 + y2 * du2
                gregs[pc, 0, p] = y0 * (du0 - sbar)
                gregs[pc, 1, p] = y1 * (du1 - sbar)
                gregs[pc, 2, p] = y2 * (du2 - sbar)
            regs[pc, 0] = y0
            regs[pc, 1] = y1
            regs[pc, 2] = y2
        else:  # OP_SUM
            src = arg1[pc]
            st = arg2[pc]
            n = reg_size[pc]
            for oi in range(n):
                hi = oi // st
                lo = oi % st
                bidx = hi * st * 3 + lo
                regs[pc, oi] = regs[src, bidx] + regs[src, bidx + st] + regs[src, bidx + 2 * st]
                for p in range(P):
                    gregs[pc, oi, p] = gregs[src, bidx, p] + gregs[src, bidx + st, p] + gregs[src, bidx + 2 * st, p]


@njit
def _needs_unmet(need, a, a_opp, pa, pao, r_defined):
    if (need & 1) != 0 and a < 0:
        return True
    if (need & 2) != 0 and a_opp < 0:
        return True
    if (need & 4) != 0 and pa < 0:
        return True
    if (need & 8) != 0 and pao < 0:
        return True
    if (need & 16) != 0 and r_defined == 0:
        return True
    return False


@njit
def tape_step(tarrs, policy_reg, theta, rewards, regs, gregs, state_vals, state_grads, skipbuf, a, a_opp, r, pa, pao, do_updates, run_prologue, logits, glogits):
    """One observation step: state updates (two-phase) then policy logits.

    ``run_prologue`` evaluates the theta-only instructions; batch callers do
    that once per call since the filled registers persist.
    """
    reg_size = tarrs[5]
    seg_start, seg_end, seg_needs = tarrs[7], tarrs[8], tarrs[9]
    state_offset, state_size, state_rank = tarrs[10], tarrs[11], tarrs[12]
    state_addr, state_result = tarrs[13], tarrs[14]
    P = gregs.shape[2]
    S = state_offset.shape[0]

    if run_prologue != 0:
        _run_segment(tarrs, seg_start[S + 1], seg_end[S + 1], theta, rewards, regs, gregs, state_vals, state_grads, a, a_opp, r, pa, pao)

    if do_updates != 0:
        skip = skipbuf
        for s in range(S):
            if _needs_unmet(seg_needs[s], a, a_opp, pa, pao, 1):
                skip[s] = True
            else:
                skip[s] = False
                _run_segment(tarrs, seg_start[s], seg_end[s], theta, rewards, regs, gregs, state_vals, state_grads, a, a_opp, r, pa, pao)
        # all updates read pre-update tensors; writes commit afterwards
        for s in range(S):
            if skip[s]:
                continue
            res = state_result[s]
            res_n = reg_size[res]
            rank = state_rank[s]
            base = state_offset[s]
            off = 0
            nf = 0
            fs0 = 0
            fs1 = 0
            fs2 = 0
            for i in range(rank):
                st = 3 ** (rank - 1 - i)
                tok = state_addr[s, i]
                if tok == TOK_FREE:
                    if nf == 0:
                        fs0 = st
                    elif nf == 1:
                        fs1 = st
                    else:
                        fs2 = st
                    nf += 1
                else:
                    off += _bind(tok, a, a_opp, pa, pao) * st
            if nf == 0:
                dst = base + off
                state_vals[dst] = regs[res, 0]
                for p in range(P):
                    state_grads[dst, p] = gregs[res, 0, p]
            elif nf == 1:
                for j in range(3):
                    dst = base + off + j * fs0
                    ri = j if res_n > 1 else 0
                    state_vals[dst] = regs[res, ri]
                    for p in range(P):
                        state_grads[dst, p] = gregs[res, ri, p]
            elif nf == 2:
                k = 0
                for j0 in range(3):
                    for j1 in range(3):
                        dst = base + off + j0 * fs0 + j1 * fs1
                        ri = k if res_n > 1 else 0
                        state_vals[dst] = regs[res, ri]
                        for p in range(P):
                            state_grads[dst, p] = gregs[res, ri, p]
                        k += 1
            else:
                k = 0
                for j0 in range(3):
                    for j1 in range(3):
                        for j2 in range(3):
                            dst = base + off + j0 * fs0 + j1 * fs1 + j2 * fs2
                            ri = k if res_n > 1 else 0
                            state_vals[dst] = regs[res, ri]
                            for p in range(P):
                                state_grads[dst, p] = gregs[res, ri, p]
                            k += 1

    # policy; uniform (zero logits) while any referenced binding is undefined
    if _needs_unmet(seg_needs[S], a, a_opp, pa, pao, do_updates):
        for k in range(3):
            logits[k] = 0.0
            for p in range(P):
                glogits[k, p] = 0.0
        return
    _run_segment(tarrs, seg_start[S], seg_end[S], theta, rewards, regs, gregs, state_vals, state_grads, a, a_opp, r, pa, pao)
    n = reg_size[policy_reg]
    for k in range(3):
        src = k if n > 1 else 0
        logits[k] = regs[policy_reg, src]
        for p in range(P):
            glogits[k, p] = gregs[policy_reg, src, p]


@njit
def _reset_state(tarrs, state_vals, state_grads):
    state_offset, state_size, state_init = tarrs[10], tarrs[11], tarrs[15]
    S = state_offset.shape[0]
    P = state_grads.shape[1]
    for s in range(S):
        for j in range(state_size[s]):
            state_vals[state_offset[s] + j] = state_init[s]
    for j in range(state_vals.shape[0]):
        for p in range(P):
            state_grads[j, p] = 0.0


@njit
def dataset_nll_grad(tarrs, policy_reg, total_size, n_params, theta, rewards, ego, opp, rew, weights):
    """Weighted NLL of next-move predictions for rounds 1..T-1, with gradient.

    ``weights[i, t]`` scales the prediction scored for round t (normally all
    ones; zeros mask padded rounds out of the objective).
    """
    codes = tarrs[0]
    N, T = ego.shape
    n_regs = codes.shape[0]
    n_states = tarrs[10].shape[0]
    regs = np.zeros((n_regs, 27), dtype=np.float64)
    gregs = np.zeros((n_regs, 27, n_params), dtype=np.float64)
    state_vals = np.zeros(total_size, dtype=np.float64)
    state_grads = np.zeros((total_size, n_params), dtype=np.float64)
    skipbuf = np.zeros(n_states, dtype=np.bool_)
    logits = np.zeros(3, dtype=np.float64)
    glogits = np.zeros((3, n_params), dtype=np.float64)
    nll = 0.0
    grad = np.zeros(n_params, dtype=np.float64)
    first = 1
    for i in range(N):
        _reset_state(tarrs, state_vals, state_grads)
        for t in range(T - 1):
            pa = ego[i, t - 1] if t > 0 else -1
            pao = opp[i, t - 1] if t > 0 else -1
            tape_step(tarrs, policy_reg, theta, rewards, regs, gregs, state_vals, state_grads, skipbuf, ego[i, t], opp[i, t], rew[i, t], pa, pao, 1, first, logits, glogits)
            first = 0
            w = weights[i, t + 1]
            if w == 0.0:
                continue
            tgt = ego[i, t + 1]
            m = logits[0]
            if logits[1] > m:
                m = logits[1]
            if logits[2] > m:
                m = logits[2]
            e0 = math.exp(logits[0] - m)
            e1 = math.exp(logits[1] - m)
            e2 = math.exp(logits[2] - m)
            se = e0 + e1 + e2
            nll += w * (math.log(se) + m - logits[tgt])
            p0 = e0 / se
            p1 = e1 / se
            p2 = e2 / se
            for p in range(n_params):
                grad[p] += w * (p0 * glogits[0, p] + p1 * glogits[1, p] + p2 * glogits[2, p] - glogits[tgt, p])
    return nll, grad


@njit
def dataset_logits(tarrs, policy_reg, total_size, theta, rewards, ego, opp, rew):
    """Per-round prediction logits, index t = prediction for round t."""
    codes = tarrs[0]
    N, T = ego.shape
    n_regs = codes.shape[0]
    n_states = tarrs[10].shape[0]
    regs = np.zeros((n_regs, 27), dtype=np.float64)
    gregs = np.zeros((n_regs, 27, 0), dtype=np.float64)
    state_vals = np.zeros(total_size, dtype=np.float64)
    state_grads = np.zeros((total_size, 0), dtype=np.float64)
    skipbuf = np.zeros(n_states, dtype=np.bool_)
    logits = np.zeros(3, dtype=np.float64)
    glogits = np.zeros((3, 0), dtype=np.float64)
    out = np.zeros((N, T, 3), dtype=np.float64)
    first = 1
    for i in range(N):
        _reset_state(tarrs, state_vals, state_grads)
        tape_step(tarrs, policy_reg, theta, rewards, regs, gregs, state_vals, state_grads, skipbuf, -1, -1, 0.0, -1, -1, 0, first, logits, glogits)
        first = 0
        for k in range(3):
            out[i, 0, k] = logits[k]
        for t in range(T - 1):
            pa = ego[i, t - 1] if t > 0 else -1
            pao = opp[i, t - 1] if t > 0 else -1
            tape_step(tarrs, policy_reg, theta, rewards, regs, gregs, state_vals, state_grads, skipbuf, ego[i, t], opp[i, t], rew[i, t], pa, pao, 1, 0, logits, glogits)
            for k in range(3):
                out[i, t + 1, k] = logits[k]
    return out
