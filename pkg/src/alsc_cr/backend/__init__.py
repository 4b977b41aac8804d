from .protocol import ModelHandle, TrainJob  # noqa: F401
