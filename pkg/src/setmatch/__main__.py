"""Allow ``python -m setmatch`` as an alias for the ``setmatch`` script."""

from .cli import entrypoint

entrypoint()
