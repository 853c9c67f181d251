"""Entity extraction from marketplace listing pages.

Subpackages: ``market_sim`` (synthetic markets and a mock HTTP service),
``extract`` (html normalization and regex weak labeling) and ``neural``
(a small numpy autograd).  Top-level modules hold the crawler, dataset
builders, the two NER models, evaluation and the command line.
"""

__version__ = "0.1.0"
