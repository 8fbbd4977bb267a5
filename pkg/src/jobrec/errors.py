"""Exception hierarchy shared across the package.

The CLI maps each family onto an exit code, so new errors should subclass one
of the three roots below rather than ``Exception`` directly.
"""


class JobrecError(Exception):
    pass


class ConfigError(JobrecError):
    """Invalid configuration. May carry several problems at once."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DataError(JobrecError):
    pass


class MissingFileError(DataError):
    pass


class DanglingReferenceError(DataError):
    pass


class MalformedRecordError(DataError):
    def __init__(self, path, line_no, reason):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {reason}")


class ExternalServiceError(JobrecError):
    pass


class CompletionError(ExternalServiceError):
    def __init__(self, user_id, reason):
        self.user_id = user_id
        super().__init__(f"completion failed for user {user_id!r}: {reason}")


class InvalidGenerationError(ExternalServiceError):
    def __init__(self, user_id):
        self.user_id = user_id
        super().__init__(f"model returned empty text for user {user_id!r}")


class EmbedError(ExternalServiceError):
    pass


class EmbedContractError(EmbedError):
    pass
