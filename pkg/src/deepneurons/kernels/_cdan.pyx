# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled single-sample forward/backward for a network of DANs.

Same contract as the numpy backend for batch size 1. VEC-level products go
through scipy's BLAS; the per-DAN loops are plain C.
"""
import numpy as np
from libc.math cimport tanh, sqrt
from scipy.linalg.cython_blas cimport dgemv, dger


cdef void _vecmat_acc(const double[::1] a, const double[:, ::1] W, double[::1] out) noexcept nogil:
    # out += a @ W ; row-major W is W^T to Fortran
    cdef int n = <int>W.shape[0], m = <int>W.shape[1], one = 1
    cdef double alpha = 1.0, beta = 1.0
    cdef char trans = b'N'
    dgemv(&trans, &m, &n, &alpha, <double*>&W[0, 0], &m, <double*>&a[0], &one, &beta, &out[0], &one)


cdef void _matvec_acc(const double[:, ::1] W, const double[::1] d, double[::1] out) noexcept nogil:
    # out += W @ d
    cdef int n = <int>W.shape[0], m = <int>W.shape[1], one = 1
    cdef double alpha = 1.0, beta = 1.0
    cdef char trans = b'T'
    dgemv(&trans, &m, &n, &alpha, <double*>&W[0, 0], &m, <double*>&d[0], &one, &beta, &out[0], &one)


cdef void _outer_acc(const double[::1] a, const double[::1] d, double[:, ::1] G, double scale) noexcept nogil:
    # G += scale * outer(a, d)
    cdef int n = <int>G.shape[0], m = <int>G.shape[1], one = 1
    dger(&m, &n, &scale, <double*>&d[0], &one, <double*>&a[0], &one, &G[0, 0], &m)


cdef void _dan_forward_layer(
    const double[::1] z, Py_ssize_t n, Py_ssize_t C, Py_ssize_t start, bint per_node,
    const double[:, :, ::1] w1, const double[:, ::1] b1,
    const double[:, :, ::1] w2, const double[:, ::1] b2,
    const double[:, :, ::1] w3, const double[:, ::1] b3,
    double[:, ::1] H1, double[:, ::1] H2, double[::1] out,
) noexcept nogil:
    cdef Py_ssize_t i, p, a, b, c
    cdef Py_ssize_t h1 = w1.shape[2], h2 = w2.shape[2]
    cdef double u, ha
    cdef int ih1 = <int>h1, iC = <int>C, inc = 1
    cdef double one = 1.0
    cdef char tn = b'N'
    for i in range(n):
        p = start + i if per_node else start
        for a in range(h1):
            H1[i, a] = b1[p, a]
        dgemv(&tn, &ih1, &iC, &one, <double*>&w1[p, 0, 0], &ih1,
              <double*>&z[i * C], &inc, &one, &H1[i, 0], &inc)
        for a in range(h1):
            H1[i, a] = tanh(H1[i, a])
        for b in range(h2):
            H2[i, b] = b2[p, b]
        for a in range(h1):
            ha = H1[i, a]
            for b in range(h2):
                H2[i, b] += ha * w2[p, a, b]
        for b in range(h2):
            H2[i, b] = tanh(H2[i, b])
        u = b3[p, 0]
        for b in range(h2):
            u = u + H2[i, b] * w3[p, b, 0]
        out[i] = tanh(u)


cdef void _dan_backward_layer(
    const double[::1] z, Py_ssize_t n, Py_ssize_t C, Py_ssize_t start, bint per_node,
    const double[:, :, ::1] w1, const double[:, :, ::1] w2, const double[:, :, ::1] w3,
    const double[:, ::1] H1, const double[:, ::1] H2, const double[::1] out,
    const double[::1] dout, double[::1] dz,
    bint want_phi,
    double[:, :, ::1] gw1, double[:, ::1] gb1,
    double[:, :, ::1] gw2, double[:, ::1] gb2,
    double[:, :, ::1] gw3, double[:, ::1] gb3,
    double[::1] g1, double[::1] g2,
) noexcept nogil:
    cdef Py_ssize_t i, p, a, b, c
    cdef Py_ssize_t h1 = w1.shape[2], h2 = w2.shape[2]
    cdef double g3, acc
    cdef int ih1 = <int>h1, iC = <int>C, inc = 1
    cdef double one = 1.0, zero = 0.0
    cdef char tt = b'T'
    for i in range(n):
        p = start + i if per_node else start
        g3 = dout[i] * (1.0 - out[i] * out[i])
        for b in range(h2):
            g2[b] = g3 * w3[p, b, 0] * (1.0 - H2[i, b] * H2[i, b])
        for a in range(h1):
            acc = 0.0
            for b in range(h2):
                acc = acc + w2[p, a, b] * g2[b]
            g1[a] = acc * (1.0 - H1[i, a] * H1[i, a])
        dgemv(&tt, &ih1, &iC, &one, <double*>&w1[p, 0, 0], &ih1,
              &g1[0], &inc, &zero, &dz[i * C], &inc)
        if want_phi:
            gb3[p, 0] += g3
            for b in range(h2):
                gw3[p, b, 0] += H2[i, b] * g3
                gb2[p, b] += g2[b]
            for a in range(h1):
                gb1[p, a] += g1[a]
                for b in range(h2):
                    gw2[p, a, b] += H1[i, a] * g2[b]
            dger(&ih1, &iC, &one, &g1[0], &inc, <double*>&z[i * C], &inc, &gw1[p, 0, 0], &ih1)


def _run_forward(net, double[::1] x):
    topo = net.topology
    th = net.theta
    phi = net.phi
    cdef Py_ssize_t C = topo.n_channels
    cdef Py_ssize_t h1 = topo.dan_hidden[0], h2 = topo.dan_hidden[1]
    cdef Py_ssize_t k, n
    acts = [np.asarray(x)]
    zs = [None]
    H1s = [None]
    H2s = [None]
    for k in range(1, topo.n_layers):
        n = topo.layer_sizes[k]
        z = th[f"b{k - 1}"].copy()
        _vecmat_acc(acts[k - 1], th[f"W{k - 1}"], z)
        for j in topo.skips_into(k):
            _vecmat_acc(acts[j], th[f"S{j}_{k}"], z)
        start, per_node = net.slots[k]
        H1 = np.empty((n, h1))
        H2 = np.empty((n, h2))
        a = np.empty(n)
        _dan_forward_layer(
            z, n, C, start, per_node,
            phi["w1"], phi["b1"], phi["w2"], phi["b2"], phi["w3"], phi["b3"],
            H1, H2, a,
        )
        acts.append(a)
        zs.append(z)
        H1s.append(H1)
        H2s.append(H2)
    return acts, zs, H1s, H2s


def forward(net, X):
    x = np.ascontiguousarray(X[0], dtype=np.float64)
    acts, _, _, _ = _run_forward(net, x)
    return acts[len(acts) - 1].reshape(1, -1)


def loss_and_grad(net, X, Y, bint want_theta=True, bint want_phi=True):
    topo = net.topology
    th = net.theta
    phi = net.phi
    x = np.ascontiguousarray(X[0], dtype=np.float64)
    y = np.ascontiguousarray(Y[0], dtype=np.float64)
    acts, zs, H1s, H2s = _run_forward(net, x)
    diff = acts[len(acts) - 1] - y
    loss = float(np.mean(diff * diff))
    if not (want_theta or want_phi):
        return loss, None, None
    cdef Py_ssize_t C = topo.n_channels
    cdef Py_ssize_t k, n, L = topo.n_layers
    gtheta = {key: np.zeros_like(v) for key, v in th.items()} if want_theta else None
    gphi = {key: np.zeros_like(v) for key, v in phi.items()}
    g1 = np.empty(topo.dan_hidden[0])
    g2 = np.empty(topo.dan_hidden[1])
    dacts = [np.zeros(m) for m in topo.layer_sizes]
    dacts[L - 1][:] = (2.0 / diff.size) * diff
    for k in range(L - 1, 0, -1):
        n = topo.layer_sizes[k]
        start, per_node = net.slots[k]
        dz = np.empty(n * C)
        _dan_backward_layer(
            zs[k], n, C, start, per_node,
            phi["w1"], phi["w2"], phi["w3"],
            H1s[k], H2s[k], acts[k], dacts[k], dz,
            want_phi,
            gphi["w1"], gphi["b1"], gphi["w2"], gphi["b2"], gphi["w3"], gphi["b3"],
            g1, g2,
        )
        sources = [(k - 1, f"W{k - 1}")] + [(j, f"S{j}_{k}") for j in topo.skips_into(k)]
        if want_theta:
            gtheta[f"b{k - 1}"] += dz
        for j, name in sources:
            if want_theta:
                _outer_acc(acts[j], dz, gtheta[name], 1.0)
            if j > 0:
                _matvec_acc(th[name], dz, dacts[j])
    return loss, gtheta, (gphi if want_phi else None)


def sgd_step(net, X, Y, double alpha, double gamma, bint update_phi=True):
    """Fused single-sample SGD step; theta is updated without materialising its gradient."""
    topo = net.topology
    th = net.theta
    phi = net.phi
    x = np.ascontiguousarray(X[0], dtype=np.float64)
    y = np.ascontiguousarray(Y[0], dtype=np.float64)
    acts, zs, H1s, H2s = _run_forward(net, x)
    diff = acts[len(acts) - 1] - y
    loss = float(np.mean(diff * diff))
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss}")
    cdef Py_ssize_t C = topo.n_channels
    cdef Py_ssize_t k, n, L = topo.n_layers
    gphi = {key: np.zeros_like(v) for key, v in phi.items()}
    g1 = np.empty(topo.dan_hidden[0])
    g2 = np.empty(topo.dan_hidden[1])
    dacts = [np.zeros(m) for m in topo.layer_sizes]
    dacts[L - 1][:] = (2.0 / diff.size) * diff
    dzs = [None] * L
    for k in range(L - 1, 0, -1):
        n = topo.layer_sizes[k]
        start, per_node = net.slots[k]
        dz = np.empty(n * C)
        _dan_backward_layer(
            zs[k], n, C, start, per_node,
            phi["w1"], phi["w2"], phi["w3"],
            H1s[k], H2s[k], acts[k], dacts[k], dz,
            update_phi,
            gphi["w1"], gphi["b1"], gphi["w2"], gphi["b2"], gphi["w3"], gphi["b3"],
            g1, g2,
        )
        dzs[k] = dz
        for j in [k - 1] + topo.skips_into(k):
            if j > 0:
                name = f"W{k - 1}" if j == k - 1 else f"S{j}_{k}"
                _matvec_acc(th[name], dz, dacts[j])
    # all backprop reads are done; now write
    for k in range(1, L):
        dz = dzs[k]
        if not np.all(np.isfinite(dz)):
            raise FloatingPointError(f"non-finite gradient entering layer {k}")
        th[f"b{k - 1}"] -= alpha * dz
        _outer_acc(acts[k - 1], dz, th[f"W{k - 1}"], -alpha)
        for j in topo.skips_into(k):
            _outer_acc(acts[j], dz, th[f"S{j}_{k}"], -alpha)
    if update_phi:
        for key, g in gphi.items():
            phi[key] -= gamma * g
    return loss


cdef void _adam(double* p, const double* g, double* m, double* v, Py_ssize_t n,
                double lr, double beta1, double beta2, double eps, double c1, double c2) noexcept nogil:
    cdef Py_ssize_t i
    cdef double mi, vi
    for i in range(n):
        mi = beta1 * m[i] + (1.0 - beta1) * g[i]
        vi = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i])
        m[i] = mi
        v[i] = vi
        p[i] -= lr * (mi / c1) / (sqrt(vi / c2) + eps)


def adam_update(double[::1] p, const double[::1] g, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps, double c1, double c2):
    """In-place Adam step on flat arrays; ``c1``/``c2`` are the bias corrections."""
    with nogil:
        _adam(&p[0], &g[0], &m[0], &v[0], p.shape[0], lr, beta1, beta2, eps, c1, c2)
