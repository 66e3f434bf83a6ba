"""Exception hierarchy shared across the package.

Two marker subtrees matter for the CLI exit-code contract: DataError maps to
exit code 2, RuntimeFailure to exit code 3.
"""

from __future__ import annotations


class GatewatchError(Exception):
    pass


class DataError(GatewatchError):
    """Invalid or inconsistent input data."""


class RuntimeFailure(GatewatchError):
    """Environmental or service failure at run time."""


# -- vector / gallery -------------------------------------------------------

class ZeroVector(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class GalleryInvalid(DataError):
    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"gallery invalid: {lines}")


# -- frames / wire ----------------------------------------------------------

class MalformedFrame(DataError):
    pass


class Truncated(DataError):
    pass


class MalformedPayload(DataError):
    pass


class LengthOverflow(DataError):
    pass


class ConnectionLost(RuntimeFailure):
    def __init__(self, at_seq: int):
        self.at_seq = at_seq
        super().__init__(f"connection lost at frame seq {at_seq}")


# -- scenario ---------------------------------------------------------------

class UnknownParticipant(DataError):
    def __init__(self, person_id: str):
        self.person_id = person_id
        super().__init__(
            f"participant {person_id!r} is neither enrolled nor marked uninvited"
        )


# -- ledger -----------------------------------------------------------------

class UnsortedInput(DataError):
    pass


class StorageFailure(RuntimeFailure):
    pass


class CorruptRecord(DataError):
    def __init__(self, line: int, detail: str = ""):
        self.line = line
        super().__init__(f"corrupt record at line {line}" + (f": {detail}" if detail else ""))


# -- events -----------------------------------------------------------------

class EventGone(DataError):
    """Requested replay position has been evicted from the ring buffer."""


# -- notifier ---------------------------------------------------------------

class UnknownAlert(DataError):
    pass


class AlreadyResolved(DataError):
    pass


class UnknownPersonId(DataError):
    pass


# -- pipeline / backends ----------------------------------------------------

class BackendFailure(RuntimeFailure):
    pass


class NotConfigured(RuntimeFailure):
    pass


class BindFailure(RuntimeFailure):
    pass


class ConfigInvalid(DataError):
    pass


# -- evalkit ----------------------------------------------------------------

class RunMismatch(DataError):
    pass
