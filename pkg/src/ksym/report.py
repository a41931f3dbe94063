"""Flat ``key=value`` reports.

Every verdict is stored as three lines, ``<name>.defect``, ``<name>.tol`` and
``<name>.verdict``, so a PASS or FAIL can always be traced back to the number
and the threshold that produced it.
"""

import time

from .geometry import write_atomic

PASS, FAIL = "PASS", "FAIL"


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


class Report:
    def __init__(self, command, source):
        self.entries = [("command", command), ("problem", source)]
        self.verdicts = []
        self._start = time.perf_counter()
        self.timings = []

    def info(self, key, value):
        self.entries.append((key, value))

    def verdict(self, name, defect, tol):
        defect, tol = float(defect), float(tol)
        ok = defect <= tol
        self.entries += [(f"{name}.defect", defect), (f"{name}.tol", tol), (f"{name}.verdict", PASS if ok else FAIL)]
        self.verdicts.append((name, ok))
        return ok

    def fail(self, name, reason):
        """A check that could not produce a number (for instance a failed precondition)."""
        self.entries += [(f"{name}.verdict", FAIL), (f"{name}.reason", reason)]
        self.verdicts.append((name, False))

    def timed(self, label):
        report = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                report.timings.append((f"time.{label}_s", time.perf_counter() - self.t0))
                return False

        return _Timer()

    @property
    def passed(self):
        return all(ok for _, ok in self.verdicts)

    def lines(self):
        out = [f"{key}={_fmt(value)}" for key, value in self.entries]
        out.append(f"overall={PASS if self.passed else FAIL}")
        out += [f"{key}={value:.6f}" for key, value in self.timings]
        out.append(f"time.total_s={time.perf_counter() - self._start:.6f}")
        return out

    def text(self):
        return "\n".join(self.lines()) + "\n"

    def write(self, path):
        write_atomic(path, self.text())


def parse_report(text):
    """Inverse of :meth:`Report.text` as an ordered dict of strings."""
    out = {}
    for line in text.splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key] = value
    return out
