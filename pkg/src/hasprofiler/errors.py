"""Exception hierarchy shared across the toolkit."""


class HasProfilerError(Exception):
    """Base class for all toolkit errors."""


# --- packet / flow model ---

class AmbiguousDirection(HasProfilerError):
    """client_ip matches both or neither endpoint of a packet."""


class OutOfOrderPacket(HasProfilerError):
    """Packet arrived earlier than the last stored packet of its flow."""


class KeyMismatch(HasProfilerError):
    """Packet does not belong to the flow it was ingested into."""


# --- trace I/O ---

class ParseError(HasProfilerError):
    """Malformed field in an input file; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MissingClientIp(ParseError):
    """Packet trace has no client_ip metadata."""


class UnsupportedFormat(HasProfilerError):
    """Capture file is not a classic pcap with an Ethernet linktype."""


class OverlapError(HasProfilerError):
    """Two label intervals of the same flow and family overlap."""


# --- learning ---

class EmptyDataset(HasProfilerError):
    """Training requires at least one sample."""


class EmptyNode(HasProfilerError):
    """Impurity of a node with zero samples is undefined."""


class ArityMismatch(HasProfilerError):
    """Feature vector length differs from the model's expected M."""


class FormatError(HasProfilerError):
    """Model file does not start with the expected magic."""


class VersionError(HasProfilerError):
    """Model file version is not supported by this code."""


# --- evaluation ---

class BadK(HasProfilerError):
    """k outside [2, N] for k-fold splitting."""


# --- simulator ---

class InvalidScript(HasProfilerError):
    """Session script violates its invariants."""
