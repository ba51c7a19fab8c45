"""Desk-scale Galileo OSNMA toolkit.

Bit-exact message codecs for the authentication data channel, TESLA
key-chain generation and delayed-key verification, Merkle-authenticated
key distribution, a pluggable signature-scheme registry with
size-faithful post-quantum surrogates, broadcast feasibility analysis,
and a deterministic spoofing simulator.
"""

from .bits import BitReader, Bits, BitWriter
from .framing import GstTime, PageField, SubframePayload, assemble_subframe, split_page_field
from .tesla import TeslaChain, TeslaParams, generate_chain, make_tag, verify_key

__version__ = "0.1.0"

__all__ = [
    "BitReader",
    "Bits",
    "BitWriter",
    "GstTime",
    "PageField",
    "SubframePayload",
    "TeslaChain",
    "TeslaParams",
    "assemble_subframe",
    "generate_chain",
    "make_tag",
    "split_page_field",
    "verify_key",
    "__version__",
]
