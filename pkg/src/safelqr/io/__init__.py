"""Reading and writing of systems, trajectories, curves and reports."""

from safelqr.io.formats import (
    Curves,
    format_value,
    load_object,
    read_curves,
    read_report,
    read_system,
    read_trajectory,
    sanitize,
    system_from_dict,
    system_to_dict,
    write_curves,
    write_report,
    write_system,
    write_trajectory,
)
from safelqr.io.registry import read, readable, register, type_key, writable, write

__all__ = [
    "Curves",
    "format_value",
    "load_object",
    "read",
    "read_curves",
    "read_report",
    "read_system",
    "read_trajectory",
    "readable",
    "register",
    "sanitize",
    "system_from_dict",
    "system_to_dict",
    "type_key",
    "writable",
    "write",
    "write_curves",
    "write_report",
    "write_system",
    "write_trajectory",
]
