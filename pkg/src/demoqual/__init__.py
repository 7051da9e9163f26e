"""demoqual: demonstration-quality assessment for learning from demonstration.

Learns task-parameterized Gaussian mixture models from kinesthetic-style
demonstrations, reproduces button-press tasks on new targets through
closed-loop inverse kinematics on a simulated 7-DoF arm, and scores the
resulting success rates to separate high- from low-quality demonstration
sets and fast from slow adapters.
"""

from importlib import resources

from ._kernels import BACKEND

__version__ = "0.1.0"


def data_path(filename):
    """Absolute path of a bundled default config file."""
    return resources.files("demoqual.data") / filename


__all__ = ["BACKEND", "data_path", "__version__"]
