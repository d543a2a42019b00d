from .backend import BACKEND_NAME, available_backends, get_kernels
from .gradcheck import grad_check
from .params import (
    ParamError,
    ParamStore,
    ParamTensor,
    load_checkpoint,
    save_checkpoint,
    uniform_init,
)
from .tape import Tape, TapeError, Value

__all__ = [
    "BACKEND_NAME",
    "available_backends",
    "get_kernels",
    "grad_check",
    "ParamError",
    "ParamStore",
    "ParamTensor",
    "load_checkpoint",
    "save_checkpoint",
    "uniform_init",
    "Tape",
    "TapeError",
    "Value",
]
