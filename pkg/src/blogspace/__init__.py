"""Network and timing analysis of blog comment logs.

Modules: ``ingest`` (event logs), ``bigraph`` (user/content networks),
``tempstats`` (timing statistics), ``spectral`` (Laplacian communities),
``synthgen`` (synthetic logs with planted groups), ``cli`` and ``report``.
"""

__version__ = "0.1.0"
