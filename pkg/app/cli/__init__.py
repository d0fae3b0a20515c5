# Makes 'cli' a sub-package of 'app'.
from .commands import build_parser, run
