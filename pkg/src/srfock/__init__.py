"""Photon-counting statistics and superradiant wavepackets for heralded
atomic-ensemble pair sources.

The package has three layers:

* number statistics of a two-mode pair source and exact click statistics of
  lossy multiplexed detector trees (``source``, ``detection``),
* Monte Carlo trial simulation with a compiled counting kernel and a pure
  NumPy fallback (``simulate``, ``_kernels``),
* emission-time densities of superradiant one- and two-photon wavepackets,
  samplers, and decay-rate / frequency estimation (``wavepacket``,
  ``estimation``).

``cli`` exposes the command line entry point, ``config`` the INI run
configuration, ``manifest`` the reproducibility manifest.
"""

__version__ = "0.1.0"

from .source import CutoffError, PairSource, ConditionalState  # noqa: F401
from .detection import DetectorModel, DetectionTree, ClickDistribution  # noqa: F401
from .wavepacket import WavepacketParams, OverdampedError  # noqa: F401

__all__ = [
    "__version__",
    "CutoffError",
    "PairSource",
    "ConditionalState",
    "DetectorModel",
    "DetectionTree",
    "ClickDistribution",
    "WavepacketParams",
    "OverdampedError",
]
