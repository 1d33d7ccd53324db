from ._minegp import *  # noqa: F401,F403
