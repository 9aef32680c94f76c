"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CertdroidError(Exception):
    """Base class for every error raised by certdroid."""


class IngestError(CertdroidError):
    """A package or profile document could not be turned into a RawPackage.

    ``entry`` names the archive entry (or document field) that failed, when known.
    """

    def __init__(self, message: str, entry: str | None = None):
        self.entry = entry
        if entry is not None:
            message = f"{entry}: {message}"
        super().__init__(message)


class NotAnArchive(IngestError):
    pass


class NoCertificate(IngestError):
    pass


class ManifestMissing(IngestError):
    pass


class ManifestMalformed(IngestError):
    def __init__(self, message: str, entry: str | None = None, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset:#x})"
        super().__init__(message, entry)


class DexMalformed(IngestError):
    pass


class SchemaViolation(IngestError):
    def __init__(self, message: str, path: str = "$"):
        self.path = path
        super().__init__(message, path)


class ConfigInvalid(CertdroidError):
    pass


class ConfigMismatch(CertdroidError):
    pass


class EmptyCategory(CertdroidError):
    pass


class DimensionMismatch(CertdroidError):
    pass


class UnlabeledSample(CertdroidError):
    pass


class EmptyCorpus(CertdroidError):
    pass


class BadWeights(CertdroidError):
    pass


class MissingLabel(CertdroidError):
    pass


class CorpusTooSmall(CertdroidError):
    pass


class FoldDegenerate(CertdroidError):
    pass


class BadSpec(CertdroidError):
    pass


class MissingArtifact(CertdroidError):
    def __init__(self, path):
        self.path = path
        super().__init__(f"missing artifact: {path}")


class VersionMismatch(CertdroidError):
    pass


class WorkspaceLocked(CertdroidError):
    pass
