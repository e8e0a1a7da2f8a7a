"""Networks of Deep Artificial Neurons.

Every non-input node of the outer network is a DAN: a small tanh MLP mapping an
``n_channels``-wide slice of the layer's pre-activation vector to a single
activation. Nodes are wired together by vectorized synapses (VECs), plain
weight matrices whose output width is ``n_next * n_channels``.

Parameters are split into two disjoint groups:

* ``theta`` - the VEC bank (layer matrices, their biases, skip matrices);
  plastic at all times.
* ``phi`` - the phenotype storage, stacked along a leading axis so that one,
  one-per-layer or one-per-node phenotypes share a single layout.
"""
from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .rng import spawn_streams

PHI_KEYS = ("w1", "b1", "w2", "b2", "w3", "b3")


class TopologyError(ValueError):
    pass


class DimensionError(ValueError):
    pass


class SharingMode(str, enum.Enum):
    SHARED = "shared"
    PER_LAYER = "per_layer"
    PER_NODE = "per_node"


@dataclass(frozen=True)
class Topology:
    """Outer-network layout.

    ``layer_sizes[0]`` counts input nodes, which are not DANs.
    """

    layer_sizes: tuple[int, ...]
    n_channels: int
    skip_pairs: tuple[tuple[int, int], ...] = ()
    dan_hidden: tuple[int, int] = (15, 8)

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        object.__setattr__(
            self, "skip_pairs", tuple((int(j), int(k)) for j, k in self.skip_pairs)
        )
        object.__setattr__(self, "dan_hidden", tuple(int(h) for h in self.dan_hidden))
        if len(self.layer_sizes) < 3:
            raise TopologyError(
                f"need input, at least one hidden and an output layer, got {self.layer_sizes}"
            )
        if any(n < 1 for n in self.layer_sizes):
            raise TopologyError(f"layer sizes must be positive, got {self.layer_sizes}")
        if self.n_channels < 1:
            raise TopologyError(f"n_channels must be >= 1, got {self.n_channels}")
        if len(self.dan_hidden) != 2 or min(self.dan_hidden) < 1:
            raise TopologyError(f"dan_hidden must be two positive widths, got {self.dan_hidden}")
        last = len(self.layer_sizes) - 1
        seen = set()
        for j, k in self.skip_pairs:
            if k != j + 2 or j < 0 or k > last:
                raise TopologyError(f"invalid skip pair ({j}, {k}) for {last + 1} layers")
            if (j, k) in seen:
                raise TopologyError(f"duplicate skip pair ({j}, {k})")
            seen.add((j, k))

    @classmethod
    def reference(cls, n_channels: int = 40) -> "Topology":
        return cls((1, 40, 40, 1), n_channels, ((0, 2), (1, 3)))

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes)

    @property
    def n_dans(self) -> int:
        return sum(self.layer_sizes[1:])

    def skips_into(self, k: int) -> list[int]:
        return [j for j, kk in self.skip_pairs if kk == k]

    def theta_shapes(self) -> dict[str, tuple[int, ...]]:
        sizes, c = self.layer_sizes, self.n_channels
        shapes = {}
        for l in range(self.n_layers - 1):
            shapes[f"W{l}"] = (sizes[l], sizes[l + 1] * c)
            shapes[f"b{l}"] = (sizes[l + 1] * c,)
        for j, k in self.skip_pairs:
            shapes[f"S{j}_{k}"] = (sizes[j], sizes[k] * c)
        return shapes

    def phi_shapes(self, count: int) -> dict[str, tuple[int, ...]]:
        h1, h2 = self.dan_hidden
        c = self.n_channels
        return {
            "w1": (count, c, h1),
            "b1": (count, h1),
            "w2": (count, h1, h2),
            "b2": (count, h2),
            "w3": (count, h2, 1),
            "b3": (count, 1),
        }

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "n_channels": self.n_channels,
            "skip_pairs": [list(p) for p in self.skip_pairs],
            "dan_hidden": list(self.dan_hidden),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Topology":
        return cls(
            tuple(d["layer_sizes"]),
            int(d["n_channels"]),
            tuple(tuple(p) for p in d.get("skip_pairs", ())),
            tuple(d.get("dan_hidden", (15, 8))),
        )


@dataclass
class Phenotype:
    """Parameters of a single DAN (views into the network's phenotype storage)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    @property
    def n_channels(self) -> int:
        return self.w1.shape[0]

    def size(self) -> int:
        return sum(getattr(self, k).size for k in PHI_KEYS)


def dan_forward(phi: Phenotype, input_slice) -> float:
    """Run one DAN on an ``n_channels``-wide slice; the result lies in (-1, 1)."""
    s = np.asarray(input_slice, dtype=np.float64)
    if s.shape != (phi.n_channels,):
        raise DimensionError(
            f"DAN expects a slice of width {phi.n_channels}, got shape {s.shape}"
        )
    h1 = np.tanh(s @ phi.w1 + phi.b1)
    h2 = np.tanh(h1 @ phi.w2 + phi.b2)
    return float(np.tanh(h2 @ phi.w3 + phi.b3)[0])


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class NetworkOfDANs:
    topology: Topology
    mode: SharingMode
    theta: dict[str, np.ndarray]
    phi: dict[str, np.ndarray]
    seed: int | None = None
    _slots: list = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.mode = SharingMode(self.mode)
        expected = self.topology.theta_shapes()
        if set(self.theta) != set(expected):
            raise TopologyError(f"theta keys {sorted(self.theta)} != {sorted(expected)}")
        for k, shp in expected.items():
            if self.theta[k].shape != shp:
                raise DimensionError(f"theta[{k}] has shape {self.theta[k].shape}, expected {shp}")
        expected = self.topology.phi_shapes(self.n_phenotypes)
        for k, shp in expected.items():
            if self.phi[k].shape != shp:
                raise DimensionError(f"phi[{k}] has shape {self.phi[k].shape}, expected {shp}")
        self._slots = self._compute_slots()

    @property
    def n_phenotypes(self) -> int:
        if self.mode is SharingMode.SHARED:
            return 1
        if self.mode is SharingMode.PER_LAYER:
            return self.topology.n_layers - 1
        return self.topology.n_dans

    def _compute_slots(self):
        # per DAN layer k>=1: (first phenotype index, one-per-node?)
        slots = [None]
        offset = 0
        for k in range(1, self.topology.n_layers):
            if self.mode is SharingMode.SHARED:
                slots.append((0, False))
            elif self.mode is SharingMode.PER_LAYER:
                slots.append((k - 1, False))
            else:
                slots.append((offset, True))
                offset += self.topology.layer_sizes[k]
        return slots

    @property
    def slots(self):
        return self._slots

    def phenotype_index(self, layer: int, node: int) -> int:
        start, per_node = self._slots[layer]
        return start + node if per_node else start

    def phenotype(self, index: int = 0) -> Phenotype:
        return Phenotype(*(self.phi[k][index] for k in PHI_KEYS))

    def parameters(self, subset: str = "both") -> dict[str, np.ndarray]:
        """Live (aliased) parameter arrays; ``theta`` and ``phi`` keys never collide."""
        if subset == "theta":
            return dict(self.theta)
        if subset == "phi":
            return {f"phi.{k}": v for k, v in self.phi.items()}
        if subset == "both":
            return {**self.parameters("theta"), **self.parameters("phi")}
        raise ValueError(f"unknown parameter subset {subset!r}")

    def count(self, subset: str = "both") -> int:
        return sum(v.size for v in self.parameters(subset).values())

    def copy(self) -> "NetworkOfDANs":
        return NetworkOfDANs(
            self.topology,
            self.mode,
            {k: v.copy() for k, v in self.theta.items()},
            {k: v.copy() for k, v in self.phi.items()},
            self.seed,
        )

    def predict(self, x) -> np.ndarray:
        """Batched prediction for scalar inputs ``x`` (shape ``(B,)``)."""
        X = np.asarray(x, dtype=np.float64).reshape(-1, self.topology.layer_sizes[0])
        out = kernels.forward(self, X)
        return out[:, 0] if out.shape[1] == 1 else out

    def forward(self, x: float) -> float:
        return float(self.predict([x])[0])

    def layer_forward(self, l: int, act) -> np.ndarray:
        """Output of DAN layer ``l + 1`` given layer ``l``'s activations (no skips)."""
        a = np.asarray(act, dtype=np.float64)
        n_in = self.topology.layer_sizes[l]
        if a.shape[-1] != n_in:
            raise DimensionError(f"layer {l} has {n_in} nodes, got activations of shape {a.shape}")
        z = a.reshape(-1, n_in) @ self.theta[f"W{l}"] + self.theta[f"b{l}"]
        out = kernels.dan_layer(self, l + 1, z)
        return out.reshape(a.shape[:-1] + (out.shape[-1],))

    def loss_and_grad(self, X, Y, want_theta=True, want_phi=True):
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.topology.layer_sizes[0])
        Y = np.asarray(Y, dtype=np.float64).reshape(-1, self.topology.layer_sizes[-1])
        return kernels.loss_and_grad(self, X, Y, want_theta, want_phi)

    def checksum(self, subset: str = "both") -> int:
        crc = 0
        for k, v in sorted(self.parameters(subset).items()):
            crc = zlib.crc32(k.encode(), crc)
            crc = zlib.crc32(np.ascontiguousarray(v).tobytes(), crc)
        return crc


def init_theta(topology: Topology, rng: np.random.Generator) -> dict[str, np.ndarray]:
    theta = {}
    for name, shape in topology.theta_shapes().items():
        if name.startswith("b"):
            theta[name] = np.zeros(shape)
        else:
            theta[name] = _uniform(rng, shape, shape[0])
    return theta


def init_phi(topology: Topology, count: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    phi = {}
    for name, shape in topology.phi_shapes(count).items():
        if name.startswith("b"):
            phi[name] = np.zeros(shape)
        else:
            phi[name] = _uniform(rng, shape, shape[1])
    return phi


def init_network(
    topology: Topology,
    mode: SharingMode | str = SharingMode.SHARED,
    seed: int = 0,
) -> NetworkOfDANs:
    """Random network; theta and phi come from separate sub-streams of ``seed``."""
    mode = SharingMode(mode)
    streams = spawn_streams(seed)
    count = {
        SharingMode.SHARED: 1,
        SharingMode.PER_LAYER: topology.n_layers - 1,
        SharingMode.PER_NODE: topology.n_dans,
    }[mode]
    theta = init_theta(topology, streams["theta_init"])
    phi = init_phi(topology, count, streams["phi_init"])
    return NetworkOfDANs(topology, mode, theta, phi, seed)
