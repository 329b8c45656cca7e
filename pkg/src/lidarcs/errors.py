"""Exception hierarchy shared by every module."""


class LidarCSError(Exception):
    """Base class for all toolkit errors (user/input problems)."""


class DegenerateRange(LidarCSError):
    """A point lies at (or numerically at) the sensor origin."""


class EmptyInput(LidarCSError):
    pass


class InvalidSpec(LidarCSError):
    pass


class InvalidInput(LidarCSError):
    pass


class EmptyScene(LidarCSError):
    pass


class UnknownCategory(LidarCSError):
    pass


class MismatchedFrames(LidarCSError):
    pass


class IoFailure(LidarCSError):
    """Environment-level failure (missing/unreadable/unwritable file)."""


class FormatError(LidarCSError):
    """Malformed file contents. ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = str(path)
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class TruncatedFile(FormatError):
    pass


class MalformedHeader(FormatError):
    pass


class MalformedLine(FormatError):
    pass


class MalformedRecord(FormatError):
    pass


class InvalidManifest(FormatError):
    pass
