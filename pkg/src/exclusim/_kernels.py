"""Compiled event loops.

Every routine works on flat site indices and a neighbor table
``nbr[s, k] = s + disp[k]`` (wrapped). Each mode has exactly one loop,
``advance_*``; :func:`exclusim.dynamics.step` calls the coupled loop with
``max_events=1``, so a run is literally a sequence of steps and consumes
the random stream identically.

Random draws per event, in order: holding time, category (coupled and
environment modes only), then one uniform choosing either the ordered
exchange pair or the walker's jump.

Mutable loop state is passed in small arrays:

``clock = [t, A_1, ..., A_d]``
``last = [kind, a, b, k]`` (last event; kind 0 exchange, 1 walker)
``site = [w]`` (flat walker / tag site)
"""
import numpy as np
from numba import njit

EXCHANGE = 0
WALKER = 1


@njit(cache=True)
def pick_index(cdf, u):
    k = 0
    while k < cdf.shape[0] - 1 and u >= cdf[k]:
        k += 1
    return k


@njit(cache=True)
def refresh_walker(xi, nbr, disp, w, open_, phi):
    """Recompute open edges and drift at walker site ``w``; return the walker rate."""
    rate = 0
    for i in range(phi.shape[0]):
        phi[i] = 0.0
    occupied = xi[w]
    for k in range(nbr.shape[1]):
        c = occupied * xi[nbr[w, k]]
        open_[k] = c
        if c:
            rate += 1
            for i in range(phi.shape[0]):
                phi[i] += disp[k, i]
    return float(rate)


@njit(cache=True)
def touches(nbr, w, a, b):
    if a == w or b == w:
        return True
    for k in range(nbr.shape[1]):
        s = nbr[w, k]
        if s == a or s == b:
            return True
    return False


@njit(cache=True)
def choose_open(open_, rate, u):
    target = u * rate
    acc = 0.0
    last = -1
    for k in range(open_.shape[0]):
        if open_[k]:
            last = k
            acc += 1.0
            if target < acc:
                return k
    return last


@njit(cache=True)
def _record(idx, pos, clock, phi, dt_partial, J, X_out, A_out, J_out):
    for i in range(pos.shape[0]):
        X_out[idx, i] = pos[i]
        A_out[idx, i] = clock[1 + i] + phi[i] * dt_partial
    for k in range(J.shape[0]):
        J_out[idx, k] = J[k]


@njit(cache=True)
def advance_coupled(xi, nbr, disp, cdf, ex_rate, T, samples, X_out, A_out, J_out,
                    pos, J, clock, site, last, max_events, rng):
    """Run the (exclusion, walker) pair until time ``T`` or ``max_events`` events.

    Sample times falling in the simulated window are recorded into
    ``*_out``. Returns the number of events applied.
    """
    d = disp.shape[1]
    m = disp.shape[0]
    n_sites = xi.shape[0]
    phi = np.zeros(d)
    open_ = np.zeros(m, dtype=np.int64)
    w = site[0]
    rw = refresh_walker(xi, nbr, disp, w, open_, phi)
    t = clock[0]
    idx = 0
    n_samples = samples.shape[0]
    events = 0
    while max_events < 0 or events < max_events:
        total = ex_rate + rw
        dt = -np.log(1.0 - rng.random()) / total
        t_next = t + dt
        while idx < n_samples and samples[idx] < t_next:
            _record(idx, pos, clock, phi, samples[idx] - t, J, X_out, A_out, J_out)
            idx += 1
        if t_next > T:
            break
        # drift is piecewise constant, so this is the exact compensator
        for i in range(d):
            clock[1 + i] += phi[i] * dt
        t = t_next
        clock[0] = t
        events += 1
        u = rng.random() * total
        if u < ex_rate or rw == 0.0:
            x = rng.random() * n_sites
            a = int(x)
            k = pick_index(cdf, x - a)
            b = nbr[a, k]
            if xi[a] != xi[b]:
                tmp = xi[a]
                xi[a] = xi[b]
                xi[b] = tmp
                if touches(nbr, w, a, b):
                    rw = refresh_walker(xi, nbr, disp, w, open_, phi)
            last[0] = EXCHANGE
            last[1] = a
            last[2] = b
            last[3] = k
        else:
            k = choose_open(open_, rw, rng.random())
            last[0] = WALKER
            last[1] = w
            w = nbr[w, k]
            last[2] = w
            last[3] = k
            for i in range(d):
                pos[i] += disp[k, i]
            J[k] += 1
            rw = refresh_walker(xi, nbr, disp, w, open_, phi)
    site[0] = w
    return events


@njit(cache=True)
def advance_environment(eta, nbr, disp, cdf, ex_rate, T, samples, X_out, A_out, J_out,
                        pos, J, clock, last, max_events, rng):
    """Environment seen from the walker; the walker sits at flat site 0 and the
    configuration is shifted, ``eta <- tau_y eta``, whenever it moves by ``y``."""
    d = disp.shape[1]
    m = disp.shape[0]
    n_sites = eta.shape[0]
    phi = np.zeros(d)
    open_ = np.zeros(m, dtype=np.int64)
    buf = np.empty_like(eta)
    rw = refresh_walker(eta, nbr, disp, 0, open_, phi)
    t = clock[0]
    idx = 0
    n_samples = samples.shape[0]
    events = 0
    while max_events < 0 or events < max_events:
        total = ex_rate + rw
        dt = -np.log(1.0 - rng.random()) / total
        t_next = t + dt
        while idx < n_samples and samples[idx] < t_next:
            _record(idx, pos, clock, phi, samples[idx] - t, J, X_out, A_out, J_out)
            idx += 1
        if t_next > T:
            break
        for i in range(d):
            clock[1 + i] += phi[i] * dt
        t = t_next
        clock[0] = t
        events += 1
        u = rng.random() * total
        if u < ex_rate or rw == 0.0:
            x = rng.random() * n_sites
            a = int(x)
            k = pick_index(cdf, x - a)
            b = nbr[a, k]
            if eta[a] != eta[b]:
                tmp = eta[a]
                eta[a] = eta[b]
                eta[b] = tmp
                if touches(nbr, 0, a, b):
                    rw = refresh_walker(eta, nbr, disp, 0, open_, phi)
            last[0] = EXCHANGE
            last[1] = a
            last[2] = b
            last[3] = k
        else:
            k = choose_open(open_, rw, rng.random())
            for s in range(n_sites):
                buf[s] = eta[nbr[s, k]]
            for s in range(n_sites):
                eta[s] = buf[s]
            for i in range(d):
                pos[i] += disp[k, i]
            J[k] += 1
            last[0] = WALKER
            last[1] = 0
            last[2] = 0
            last[3] = k
            rw = refresh_walker(eta, nbr, disp, 0, open_, phi)
    return events


@njit(cache=True)
def advance_tagged(xi, nbr, disp, cdf, neg, ex_rate, T, samples, X_out, A_out, J_out,
                   pos, J, clock, site, last, max_events, rng):
    """Exclusion only, following the particle at ``site[0]``; ``clock[1:]`` stays 0."""
    d = disp.shape[1]
    n_sites = xi.shape[0]
    zero = np.zeros(d)
    w = site[0]
    t = clock[0]
    idx = 0
    n_samples = samples.shape[0]
    events = 0
    while max_events < 0 or events < max_events:
        dt = -np.log(1.0 - rng.random()) / ex_rate
        t_next = t + dt
        while idx < n_samples and samples[idx] < t_next:
            _record(idx, pos, clock, zero, 0.0, J, X_out, A_out, J_out)
            idx += 1
        if t_next > T:
            break
        t = t_next
        clock[0] = t
        events += 1
        x = rng.random() * n_sites
        a = int(x)
        k = pick_index(cdf, x - a)
        b = nbr[a, k]
        last[0] = EXCHANGE
        last[1] = a
        last[2] = b
        last[3] = k
        if xi[a] != xi[b]:
            tmp = xi[a]
            xi[a] = xi[b]
            xi[b] = tmp
            if a == w:
                w = b
                for i in range(d):
                    pos[i] += disp[k, i]
                J[k] += 1
            elif b == w:
                w = a
                kk = neg[k]
                for i in range(d):
                    pos[i] += disp[kk, i]
                J[kk] += 1
    site[0] = w
    return events
