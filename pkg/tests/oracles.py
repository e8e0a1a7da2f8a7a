"""Independent scalar-loop reference implementations (no numpy arithmetic)."""
import math


def matmul_loops(a, b):
    m, k = len(a), len(a[0])
    n = len(b[0])
    assert len(b) == k
    return [[sum(a[i][p] * b[p][j] for p in range(k)) for j in range(n)] for i in range(m)]


def dan_loops(w1, b1, w2, b2, w3, b3, s):
    """One DAN from nested lists: w1[c][a], w2[a][b], w3[b][0]."""
    C, H1, H2 = len(w1), len(b1), len(b2)
    h1 = [math.tanh(b1[a] + sum(s[c] * w1[c][a] for c in range(C))) for a in range(H1)]
    h2 = [math.tanh(b2[b] + sum(h1[a] * w2[a][b] for a in range(H1))) for b in range(H2)]
    return math.tanh(b3[0] + sum(h2[b] * w3[b][0] for b in range(H2)))


def phenotype_lists(net, p):
    return [net.phi[k][p].tolist() for k in ("w1", "b1", "w2", "b2", "w3", "b3")]


def network_loops(net, x):
    """Forward pass edge by edge: every VEC entry and every DAN evaluated with scalar loops."""
    topo = net.topology
    C = topo.n_channels
    sizes = topo.layer_sizes
    acts = [[float(v) for v in (x if hasattr(x, "__len__") else [x])]]
    for k in range(1, len(sizes)):
        W = net.theta[f"W{k - 1}"].tolist()
        bias = net.theta[f"b{k - 1}"].tolist()
        width = sizes[k] * C
        z = []
        for col in range(width):
            v = bias[col]
            for r in range(sizes[k - 1]):
                v += acts[k - 1][r] * W[r][col]
            z.append(v)
        for j in topo.skips_into(k):
            S = net.theta[f"S{j}_{k}"].tolist()
            for col in range(width):
                for r in range(sizes[j]):
                    z[col] += acts[j][r] * S[r][col]
        out = []
        for i in range(sizes[k]):
            p = net.phenotype_index(k, i)
            out.append(dan_loops(*phenotype_lists(net, p), z[i * C:(i + 1) * C]))
        acts.append(out)
    return acts[-1]


def mse_loops(pred, target):
    return sum((p - t) ** 2 for p, t in zip(pred, target)) / len(pred)
