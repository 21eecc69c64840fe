"""Exception hierarchy shared by all modules.

Validation problems (bad inputs, violated preconditions) and numerical
failures (non-convergence, bracket failures) are kept apart so that the
command line can map them to distinct exit codes.
"""


class VortexLabError(Exception):
    pass


class ValidationError(VortexLabError, ValueError):
    pass


class NumericalError(VortexLabError, RuntimeError):
    pass
