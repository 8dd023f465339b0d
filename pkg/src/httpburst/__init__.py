"""HTTP-Burst: fetch a page's missing inlined objects in batched BURST requests."""

__version__ = "0.1.0"
