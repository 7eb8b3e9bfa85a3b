"""
Evaluation Component
Per-class ROC AUC, mAUC reports, freeze-depth sweeps and supervision comparisons.
"""

DEFAULT_CONFIG = {
    "enabled": True,
    "version": "1.0.0",
    "settings": {
        "sweep": {
            "values": "0,1,2,3,4,linear",
        },
        "compare": {
            "repeats": 3,
        },
    },
}


def setup(cli, settings):
    """Load the Evaluation component."""
    from .component import Evaluation

    cli.add_component(Evaluation(cli, settings))
