# HeraldComb: runs in a standard CPython 3.9+ environment.
"""Exception hierarchy shared by the HeraldComb packages.

Every exception carries the process exit code the command-line front end
returns when it escapes a command.
"""


class HeraldCombError(Exception):
    """Base class for all HeraldComb failures."""

    exit_code = 1


class ConfigError(HeraldCombError, ValueError):
    """Invalid parameters, unknown configuration keys or bad flags.

    Args:
        message (str): Summary of the failure.
        problems (list[str], optional): Every individual problem found. When
            omitted the message is the only problem.
    """

    exit_code = 2

    def __init__(self, message, problems=None):
        self.problems = list(problems) if problems else [message]
        if problems and len(self.problems) > 1:
            message = "{} ({} problems): {}".format(message, len(self.problems), "; ".join(self.problems))
        elif problems:
            message = "{}: {}".format(message, self.problems[0])
        super().__init__(message)


class TagFormatError(HeraldCombError):
    """A tag file or CSV export does not match its documented format."""

    exit_code = 3

    def __init__(self, message, record_index=None):
        self.record_index = record_index
        super().__init__(message)


class AnalysisUndefinedError(HeraldCombError, ArithmeticError):
    """An estimator has no defined value for the given data."""

    exit_code = 4
