"""Python surface of the njepa core: schedules, masking, noise draws,
losses, position tables, the synthetic dataset, and a one-call pretrain."""

try:
    from ._njepa import *  # noqa: F401,F403  (packaged layout)
    from ._njepa import __version__  # noqa: F401
except ImportError:  # flat layout: extension module directly on sys.path
    from _njepa import *  # noqa: F401,F403
    from _njepa import __version__  # noqa: F401
