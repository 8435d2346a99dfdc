"""Constructive Equality protocols and approximate matrix factorizations.

Modules by concern: GF(2) codes (gf2codes), dense complex linear algebra
(complexlin), classical hash protocols and the public-to-private coin
conversion (protocols_classical), quantum fingerprint and projector
protocols (protocols_quantum), approximate nonnegative and psd
factorizations (ranks), and the batch CLI (cli).
"""

from . import cli, complexlin, gf2codes, protocols_classical, protocols_quantum, ranks, util

__all__ = [
    "cli",
    "complexlin",
    "gf2codes",
    "protocols_classical",
    "protocols_quantum",
    "ranks",
    "util",
]

__version__ = "0.1.0"
