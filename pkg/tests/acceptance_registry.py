"""Shared record of acceptance outcomes, printed at the end of the pytest run."""
import time
from contextlib import contextmanager

RESULTS: dict[int, str] = {}


@contextmanager
def criterion(num: int, title: str):
    """Record ``PASS``/``FAIL`` for criterion ``num``; the body may set ``info['detail']``."""
    info = {"detail": ""}
    t0 = time.perf_counter()
    ok = False
    try:
        yield info
        ok = True
    finally:
        dt = time.perf_counter() - t0
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {title} ({dt:.1f} s) {info['detail']}".rstrip()
        RESULTS[num] = line
        print(line)
