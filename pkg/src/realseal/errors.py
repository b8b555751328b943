"""Exception hierarchy. ``exit_code`` is what the CLI returns for each error."""

from __future__ import annotations


class RealsealError(Exception):
    exit_code = 70


# crypto
class InvalidSeed(RealsealError):
    exit_code = 65


class InvalidKey(RealsealError):
    exit_code = 65


class InvalidManifest(RealsealError):
    exit_code = 65


# container
class Malformed(RealsealError):
    """Structural parse failure. ``reason`` is a short stable tag."""

    exit_code = 2

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason}: {detail}" if detail else reason)


class RefusedInconsistent(RealsealError):
    exit_code = 65


class RefusedMandatoryField(RealsealError):
    exit_code = 65


class RefusedUnverified(RealsealError):
    exit_code = 67


# trust authority
class AlreadyRegistered(RealsealError):
    exit_code = 73


class NotFound(RealsealError):
    exit_code = 68


class Unauthorized(RealsealError):
    exit_code = 77


class InvalidTransition(RealsealError):
    exit_code = 75


class RejectedSignature(RealsealError):
    exit_code = 76


class RejectedFormat(RealsealError):
    exit_code = 76


class TrustSourceUnavailable(RealsealError):
    exit_code = 69


# geometry
class BehindCamera(RealsealError):
    exit_code = 65


class DegenerateRays(RealsealError):
    exit_code = 65


class DegeneratePoints(RealsealError):
    exit_code = 65


class InsufficientGeometry(RealsealError):
    exit_code = 65


# sensing design
class DegenerateTraining(RealsealError):
    exit_code = 65
