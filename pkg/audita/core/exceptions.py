from typing import Optional, Sequence


class BaseAuditaException(Exception):
    code: str = "error"

    def __init__(self, detail: str, code: Optional[str] = None) -> None:
        super().__init__(detail)
        self.detail = detail
        if code is not None:
            self.code = code

    def __str__(self) -> str:
        return f"{self.code}: {self.detail}"


class ParameterException(BaseAuditaException):
    code = "parameter"

    def __init__(self, detail: str = "Invalid parameter") -> None:
        super().__init__(detail)


class DecodeException(BaseAuditaException):
    code = "decode"

    def __init__(self, detail: str = "Malformed encoding") -> None:
        super().__init__(detail)


class IncompleteInputException(BaseAuditaException):
    code = "incomplete_input"

    def __init__(self, detail: str = "Missing chunk or tag for a challenged index") -> None:
        super().__init__(detail)


class DataLossException(BaseAuditaException):
    code = "data_loss"

    def __init__(self, detail: str = "Held chunk is missing", index: Optional[int] = None) -> None:
        super().__init__(detail)
        self.index = index


class InternalException(BaseAuditaException):
    code = "internal"

    def __init__(self, detail: str = "Internal error") -> None:
        super().__init__(detail)


class UnreachableTargetException(BaseAuditaException):
    code = "unreachable_target"

    def __init__(self, detail: str = "Coverage target cannot be reached") -> None:
        super().__init__(detail)


class RejectedTransactionException(BaseAuditaException):
    code = "rejected_transaction"

    def __init__(self, detail: str = "Transaction rejected") -> None:
        super().__init__(detail)


class UnrecoverableChunkException(BaseAuditaException):
    code = "unrecoverable_chunk"

    def __init__(
        self, indexes: Sequence[int], detail: Optional[str] = None, refusers: Sequence[bytes] = ()
    ) -> None:
        self.indexes = tuple(indexes)
        # public keys of holders that refused before the fetch gave up
        self.refusers = tuple(refusers)
        super().__init__(detail or f"No live holder for chunks {list(self.indexes)}")


class VerificationFailedException(BaseAuditaException):
    code = "verification_failed"

    def __init__(self, detail: str = "Proof of possession did not verify") -> None:
        super().__init__(detail)
