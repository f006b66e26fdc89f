import logging

from fastapi import status
from fastapi.requests import Request
from fastapi.responses import JSONResponse

logger = logging.getLogger(__name__)

# ---------------------------
# Engine errors
# ---------------------------


class RopeError(Exception):
    """Base class for all engine errors."""
    pass


class InvalidArgumentError(RopeError):
    """Raised when an input violates an operation's precondition."""
    pass


class ContractViolationError(RopeError):
    """Raised when a value falls outside the range an operation is defined on."""
    pass


class NotFoundError(RopeError):
    """Raised when a requested record or file does not exist."""
    pass


class ModelFormatError(RopeError):
    """Raised when a stored predictor model cannot be read back."""
    pass


class TraceParseError(RopeError):
    """Raised when a text interchange file is malformed."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


# ---------------------------
# FastAPI Exception Handlers
# ---------------------------

def register_exception_handlers(app):
    @app.exception_handler(InvalidArgumentError)
    async def invalid_argument_handler(request: Request, exc: InvalidArgumentError):
        return JSONResponse(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            content={"detail": str(exc)},
        )

    @app.exception_handler(ContractViolationError)
    async def contract_handler(request: Request, exc: ContractViolationError):
        return JSONResponse(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            content={"detail": str(exc)},
        )

    @app.exception_handler(TraceParseError)
    async def parse_handler(request: Request, exc: TraceParseError):
        return JSONResponse(
            status_code=status.HTTP_400_BAD_REQUEST,
            content={"detail": str(exc), "line": exc.line_number},
        )

    @app.exception_handler(ModelFormatError)
    async def model_format_handler(request: Request, exc: ModelFormatError):
        return JSONResponse(
            status_code=status.HTTP_400_BAD_REQUEST,
            content={"detail": str(exc)},
        )

    @app.exception_handler(NotFoundError)
    async def not_found_handler(request: Request, exc: NotFoundError):
        return JSONResponse(
            status_code=status.HTTP_404_NOT_FOUND,
            content={"detail": str(exc)},
        )

    @app.exception_handler(RopeError)
    async def engine_error_handler(request: Request, exc: RopeError):
        logger.error(f"Engine error: {exc}", exc_info=exc)
        return JSONResponse(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            content={"detail": "Internal server error"},
        )
