"""
Taskgen Component
Synthetic multi-label few-shot tasks, paired embedding sets and task files.
"""

DEFAULT_CONFIG = {
    "enabled": True,
    "version": "1.0.0",
    "settings": {
        "preset": "easy",
        "paired": {
            "d_text": 32,
            "delta": 0.2,
            "jitter": 0.3,
            "tokens_per_class": 6,
        },
    },
}


def setup(cli, settings):
    """Load the Taskgen component."""
    from .component import Taskgen

    cli.add_component(Taskgen(cli, settings))
