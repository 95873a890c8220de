"""Multi-task photonic time-delay reservoir computing on a silicon add-drop microring."""

__version__ = "0.1.0"
