"""Exception hierarchy.

Every error carries the process exit code the command line maps it to:
1 for user errors, 2 for unsatisfiable requests, 3 for I/O and integrity
failures.
"""
from __future__ import annotations

USER_ERROR = 1
UNSAT = 2
IO_ERROR = 3


class RosCondaError(Exception):
    exit_code = USER_ERROR


# -- user errors -------------------------------------------------------------


class MalformedVersion(RosCondaError, ValueError):
    pass


class MalformedSpec(RosCondaError, ValueError):
    pass


class MalformedManifest(RosCondaError, ValueError):
    pass


class MalformedDocument(RosCondaError, ValueError):
    """An environment, spec or lock document could not be parsed."""


class EnvironmentExists(RosCondaError):
    pass


class EnvironmentNotFound(RosCondaError):
    pass


class UnmappedDependency(RosCondaError):
    def __init__(self, package: str, keys):
        self.package = package
        self.keys = sorted(keys)
        super().__init__(
            "%s: no mapping for dependencies: %s" % (package, ", ".join(self.keys))
        )


class DependencyCycle(RosCondaError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("dependency cycle: " + " -> ".join(self.cycle))


class InstanceTooLarge(RosCondaError):
    pass


class PlatformMissing(RosCondaError):
    pass


# -- unsatisfiable -----------------------------------------------------------


class UnsatisfiableError(RosCondaError):
    exit_code = UNSAT

    def __init__(self, explanation, message: str | None = None):
        self.explanation = explanation
        super().__init__(message or str(explanation))


class SpecHasNoCandidates(UnsatisfiableError):
    def __init__(self, specs, explanation=None):
        self.specs = list(specs)
        msg = "no candidates for: " + ", ".join(str(s) for s in self.specs)
        super().__init__(explanation, msg)


class LockGenerationError(UnsatisfiableError):
    """One or more platforms failed to solve; ``outcomes`` maps platform to text."""

    def __init__(self, outcomes: dict[str, str]):
        self.outcomes = dict(outcomes)
        lines = []
        for platform in sorted(outcomes):
            lines.append("[%s]" % platform)
            lines.append(outcomes[platform])
        super().__init__(None, "\n".join(lines))


class CycleInDependencyGraph(RosCondaError):
    exit_code = UNSAT


# -- I/O and integrity -------------------------------------------------------


class SourceUnreachable(RosCondaError, OSError):
    exit_code = IO_ERROR


class MalformedIndex(RosCondaError, ValueError):
    exit_code = IO_ERROR

    def __init__(self, message: str, entry: str | None = None):
        self.entry = entry
        super().__init__(message)


class DigestMismatch(RosCondaError):
    exit_code = IO_ERROR


class PrefixTooLong(RosCondaError):
    exit_code = IO_ERROR


class LockHeld(RosCondaError):
    exit_code = IO_ERROR


class CorruptEnvironment(RosCondaError):
    exit_code = IO_ERROR
