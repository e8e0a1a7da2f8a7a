"""Networks of Deep Artificial Neurons with a meta-learned shared phenotype."""
__version__ = "0.1.0"

from .model import (  # noqa: E402
    NetworkOfDANs,
    Phenotype,
    SharingMode,
    Topology,
    dan_forward,
    init_network,
)

__all__ = [
    "NetworkOfDANs",
    "Phenotype",
    "SharingMode",
    "Topology",
    "dan_forward",
    "init_network",
]
