"""Exact computation of fair-division shares and allocation guarantees.

Submodules: ``numerics`` (rationals and an exact simplex), ``model``
(valuations, instances, allocations), ``shares`` (MMS, APS, MES),
``ladder``, ``bidding``, ``xosalloc``, ``exante`` and ``cli``.
"""

from .numerics import Rat, format_rat, rat

__version__ = "0.1.0"

__all__ = ["Rat", "rat", "format_rat", "__version__"]
