"""
Adaptation Component
Augmentation, BCE loss, AdamW and the fine-tuning loop.
"""

DEFAULT_CONFIG = {
    "enabled": True,
    "version": "1.0.0",
    "settings": {
        "train": {
            "epochs": 20,
            "batch_size": 4,
            "learning_rate": 0.0001,
            "weight_decay": 0.05,
        },
        "gradcheck": {
            "eps": 1.0e-5,
            "tolerance": 1.0e-4,
            "coords_per_tensor": 8,
        },
    },
}


def setup(cli, settings):
    """Load the Adaptation component."""
    from .component import Adaptation

    cli.add_component(Adaptation(cli, settings))
