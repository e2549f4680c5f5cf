"""Retired-instruction counting.

The hardware provider opens a user-space instruction counter on the calling
process with ``perf_event_open``.  Containers and CI runners usually refuse
that, so the default provider is the deterministic cost model carried by the
interpreter itself.  ``GI_COUNTER`` picks the provider: ``hw``, ``model`` or
``auto`` (hardware when it opens, model otherwise).
"""

from __future__ import annotations

import ctypes
import os
import platform
import struct

PERF_TYPE_HARDWARE = 0
PERF_COUNT_HW_INSTRUCTIONS = 1
_DISABLED = 1 << 0
_EXCLUDE_KERNEL = 1 << 5
_EXCLUDE_HV = 1 << 6
_IOC_ENABLE = 0x2400
_IOC_DISABLE = 0x2401
_IOC_RESET = 0x2403

_SYSCALL_NR = {"x86_64": 298, "aarch64": 241, "i386": 336, "i686": 336}

PROVIDERS = ("hw", "model", "auto")


class perf_event_attr(ctypes.Structure):
    # first published layout (PERF_ATTR_SIZE_VER0); the kernel zero-fills the rest
    _fields_ = [("type", ctypes.c_uint32), ("size", ctypes.c_uint32),
                ("config", ctypes.c_uint64), ("sample_period", ctypes.c_uint64),
                ("sample_type", ctypes.c_uint64), ("read_format", ctypes.c_uint64),
                ("flags", ctypes.c_uint64), ("wakeup_events", ctypes.c_uint32),
                ("bp_type", ctypes.c_uint32), ("config1", ctypes.c_uint64)]


_libc = ctypes.CDLL(None, use_errno=True)


def _open_counter(pid: int = 0) -> int:
    nr = _SYSCALL_NR.get(platform.machine())
    if nr is None:
        return -1
    attr = perf_event_attr()
    attr.type = PERF_TYPE_HARDWARE
    attr.size = ctypes.sizeof(attr)
    attr.config = PERF_COUNT_HW_INSTRUCTIONS
    attr.flags = _DISABLED | _EXCLUDE_KERNEL | _EXCLUDE_HV
    return _libc.syscall(nr, ctypes.byref(attr), pid, -1, -1, 0)


class InstructionCounter:
    """Context manager counting user-space instructions of this process.

    >>> with InstructionCounter() as c:   # doctest: +SKIP
    ...     work()
    >>> c.count
    """

    def __init__(self):
        self.fd = -1
        self.count: int | None = None

    def __enter__(self):
        self.fd = _open_counter()
        if self.fd < 0:
            err = ctypes.get_errno()
            raise OSError(err, f"perf_event_open unavailable: {os.strerror(err)}")
        _libc.ioctl(self.fd, _IOC_RESET, 0)
        _libc.ioctl(self.fd, _IOC_ENABLE, 0)
        return self

    def __exit__(self, *exc):
        _libc.ioctl(self.fd, _IOC_DISABLE, 0)
        self.count = struct.unpack("q", os.read(self.fd, 8))[0]
        os.close(self.fd)
        self.fd = -1
        return False


_hw_ok: bool | None = None


def hw_counter_available() -> bool:
    global _hw_ok
    if _hw_ok is None:
        fd = _open_counter()
        _hw_ok = fd >= 0
        if _hw_ok:
            os.close(fd)
    return _hw_ok


def resolve_provider(requested: str | None = None) -> str:
    """Map a requested provider (or ``$GI_COUNTER``) to ``hw`` or ``model``.

    ``hw`` is returned even when the counter cannot open; the run then fails
    with a measurement error instead of silently switching provider.
    """
    req = (requested or os.environ.get("GI_COUNTER") or "model").lower()
    if req not in PROVIDERS:
        raise ValueError(f"unknown counter provider {req!r}")
    if req == "auto":
        return "hw" if hw_counter_available() else "model"
    return req


def count_instructions(run, provider: str | None = None) -> int | None:
    """Pick the count a finished run should report; None means unmeasurable.

    ``run`` carries ``hw_count`` and ``model_count`` attributes (either may be
    None).
    """
    provider = resolve_provider(provider)
    return run.hw_count if provider == "hw" else run.model_count
