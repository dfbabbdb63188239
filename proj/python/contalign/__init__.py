"""Contour alignment with Chamfer upper-bound losses."""

try:
    from ._contalign import *  # noqa: F401,F403
    from ._contalign import Error
except ImportError:  # built in-tree: the extension sits on PYTHONPATH by itself
    from _contalign import *  # noqa: F401,F403
    from _contalign import Error
