"""
Encoder Component
Stage-structured patch transformer, freeze policies and checkpoints.
"""

DEFAULT_CONFIG = {
    "enabled": True,
    "version": "1.0.0",
    "settings": {
        "freeze": {
            "frozen_stages": 2,
        },
    },
}


def setup(cli, settings):
    """Load the Encoder component."""
    from .component import EncoderComponent

    cli.add_component(EncoderComponent(cli, settings))
