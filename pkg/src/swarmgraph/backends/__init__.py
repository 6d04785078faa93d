from .base import BUILTIN_FUNCTIONS, RoutineExecutor
from .http import HttpExecutor, HttpExecutorConfig, cache_key, http_invoke
from .mock import MockExecutor, MockPolicy, hashed_unit, mock_invoke
from .render import ExecutorRequest, escape_body, render_request

__all__ = [
    "BUILTIN_FUNCTIONS", "RoutineExecutor", "HttpExecutor", "HttpExecutorConfig", "cache_key",
    "http_invoke", "MockExecutor", "MockPolicy", "hashed_unit", "mock_invoke", "ExecutorRequest",
    "escape_body", "render_request",
]
