"""Pure numpy forward/backward for a network of DANs (batched, hand-derived)."""
import numpy as np


def _dan_forward(phi, start, per_node, s):
    # s: (B, n, C) -> cache, out (B, n)
    B, n, C = s.shape
    if per_node:
        sl = slice(start, start + n)
        x = s.transpose(1, 0, 2)  # (n, B, C)
        h1 = np.tanh(x @ phi["w1"][sl] + phi["b1"][sl][:, None, :])
        h2 = np.tanh(h1 @ phi["w2"][sl] + phi["b2"][sl][:, None, :])
        out = np.tanh(h2 @ phi["w3"][sl] + phi["b3"][sl][:, None, :])
        return (x, h1, h2, out), out[:, :, 0].T
    x = s.reshape(B * n, C)
    h1 = np.tanh(x @ phi["w1"][start] + phi["b1"][start])
    h2 = np.tanh(h1 @ phi["w2"][start] + phi["b2"][start])
    out = np.tanh(h2 @ phi["w3"][start] + phi["b3"][start])
    return (x, h1, h2, out), out.reshape(B, n)


def _dan_backward(phi, start, per_node, cache, dout, gphi):
    # dout: (B, n) -> d slice input (B, n*C)
    x, h1, h2, out = cache
    B, n = dout.shape
    if per_node:
        sl = slice(start, start + n)
        g3 = dout.T[:, :, None] * (1.0 - out * out)  # (n, B, 1)
        dh2 = g3 @ phi["w3"][sl].transpose(0, 2, 1)
        g2 = dh2 * (1.0 - h2 * h2)
        dh1 = g2 @ phi["w2"][sl].transpose(0, 2, 1)
        g1 = dh1 * (1.0 - h1 * h1)
        dx = g1 @ phi["w1"][sl].transpose(0, 2, 1)  # (n, B, C)
        if gphi is not None:
            gphi["w3"][sl] += h2.transpose(0, 2, 1) @ g3
            gphi["b3"][sl] += g3.sum(axis=1)
            gphi["w2"][sl] += h1.transpose(0, 2, 1) @ g2
            gphi["b2"][sl] += g2.sum(axis=1)
            gphi["w1"][sl] += x.transpose(0, 2, 1) @ g1
            gphi["b1"][sl] += g1.sum(axis=1)
        return dx.transpose(1, 0, 2).reshape(B, -1)
    g3 = dout.reshape(-1, 1) * (1.0 - out * out)
    dh2 = g3 @ phi["w3"][start].T
    g2 = dh2 * (1.0 - h2 * h2)
    dh1 = g2 @ phi["w2"][start].T
    g1 = dh1 * (1.0 - h1 * h1)
    dx = g1 @ phi["w1"][start].T
    if gphi is not None:
        gphi["w3"][start] += h2.T @ g3
        gphi["b3"][start] += g3.sum(axis=0)
        gphi["w2"][start] += h1.T @ g2
        gphi["b2"][start] += g2.sum(axis=0)
        gphi["w1"][start] += x.T @ g1
        gphi["b1"][start] += g1.sum(axis=0)
    return dx.reshape(B, -1)


def dan_layer(net, k, z):
    C = net.topology.n_channels
    n = net.topology.layer_sizes[k]
    start, per_node = net.slots[k]
    _, out = _dan_forward(net.phi, start, per_node, z.reshape(-1, n, C))
    return out


def _forward(net, X):
    topo = net.topology
    th = net.theta
    C = topo.n_channels
    acts = [X]
    caches = [None]
    for k in range(1, topo.n_layers):
        z = acts[k - 1] @ th[f"W{k - 1}"] + th[f"b{k - 1}"]
        for j in topo.skips_into(k):
            z = z + acts[j] @ th[f"S{j}_{k}"]
        start, per_node = net.slots[k]
        cache, a = _dan_forward(net.phi, start, per_node, z.reshape(len(X), -1, C))
        acts.append(a)
        caches.append(cache)
    return acts, caches


def forward(net, X):
    acts, _ = _forward(net, X)
    return acts[-1]


def loss_and_grad(net, X, Y, want_theta=True, want_phi=True):
    topo = net.topology
    th = net.theta
    acts, caches = _forward(net, X)
    diff = acts[-1] - Y
    loss = float(np.mean(diff * diff))
    if not (want_theta or want_phi):
        return loss, None, None
    gtheta = {k: np.zeros_like(v) for k, v in th.items()} if want_theta else None
    gphi = {k: np.zeros_like(v) for k, v in net.phi.items()} if want_phi else None
    dacts = [None] * topo.n_layers
    dacts[-1] = (2.0 / diff.size) * diff
    for k in range(topo.n_layers - 1, 0, -1):
        start, per_node = net.slots[k]
        dz = _dan_backward(net.phi, start, per_node, caches[k], dacts[k], gphi)
        sources = [(k - 1, f"W{k - 1}")] + [(j, f"S{j}_{k}") for j in topo.skips_into(k)]
        if gtheta is not None:
            gtheta[f"b{k - 1}"] += dz.sum(axis=0)
        for j, name in sources:
            if gtheta is not None:
                gtheta[name] += acts[j].T @ dz
            if j > 0:
                d = dz @ th[name].T
                dacts[j] = d if dacts[j] is None else dacts[j] + d
    return loss, gtheta, gphi
