"""
Semantics Component
Class contexts, mask-token embedding sets, the alignment head and
inter-class correlation analysis.
"""

DEFAULT_CONFIG = {
    "enabled": True,
    "version": "1.0.0",
    "settings": {
        "toy_embed": {
            "dim": 32,
            "window": 6,
            "ngram": 3,
            "buckets": 2048,
        },
        "head": {
            "tau": 10.0,
            "m0": 4,
            "aggregate": "sum",
        },
    },
}


def setup(cli, settings):
    """Load the Semantics component."""
    from .component import Semantics

    cli.add_component(Semantics(cli, settings))
