"""On-disk cache of optimized sequences.

One JSON file per ``(family, n, alpha)`` key, with ``alpha`` folded through
12 significant digits. Writes go to a temporary file in the cache directory
followed by an atomic rename, so concurrent writers never expose a partial
file. Every payload is re-checked on load; entries that fail the check are
ignored and overwritten by the next store.
"""
from __future__ import annotations

import json
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Optional, Union

from .errors import PloddError
from .filters import moment_sum
from .optimizer import OptimizedSequence, PloddProblem, optimize_plodd
from .sequence import is_symmetric

__all__ = ["CACHE_ENV", "DEFAULT_CACHE_DIR", "SequenceCache", "cache_key"]

log = logging.getLogger(__name__)

CACHE_ENV = "PLODD_CACHE_DIR"
DEFAULT_CACHE_DIR = "plodd-cache"
CONSTRAINT_TOL = 1e-10
PREFACTOR_RTOL = 1e-9


def _version() -> str:
    from . import __version__

    return __version__


def cache_key(family: str, n: int, alpha: float) -> tuple:
    return (family.upper(), int(n), float(f"{float(alpha):.12g}"))


class SequenceCache:
    """Directory of cached PLODD solutions.

    ``root`` defaults to ``$PLODD_CACHE_DIR`` and then ``./plodd-cache``.
    """

    def __init__(self, root: Union[str, os.PathLike, None] = None):
        root = root or os.environ.get(CACHE_ENV) or DEFAULT_CACHE_DIR
        self.root = Path(root)

    def path(self, key: tuple) -> Path:
        family, n, alpha = key
        return self.root / f"{family.lower()}-n{n}-a{alpha!r}.json"

    def load(self, problem: PloddProblem) -> Optional[OptimizedSequence]:
        key = cache_key("PLODD", problem.n, problem.alpha)
        path = self.path(key)
        try:
            with open(path, encoding="utf-8") as fh:
                payload = json.load(fh)
        except FileNotFoundError:
            return None
        except (OSError, ValueError) as exc:
            log.warning("unreadable cache entry %s: %s", path, exc)
            return None
        try:
            result = self._revalidate(payload, key, problem)
        except (PloddError, KeyError, TypeError, ValueError) as exc:
            log.warning("rejecting cache entry %s: %s", path, exc)
            return None
        if result is not None:
            result.provenance["cache"] = "hit"
        return result

    def _revalidate(self, payload: dict, key: tuple, problem: PloddProblem) -> Optional[OptimizedSequence]:
        if tuple(payload.get("key", ())) != (key[0], key[1], key[2]):
            raise ValueError(f"key mismatch: {payload.get('key')!r}")
        result = OptimizedSequence.from_json(payload)
        seq = result.sequence
        if seq.n != problem.n or not is_symmetric(seq):
            raise ValueError("sequence is not a symmetric sequence of the requested size")
        for p in range(1, problem.m_constraints + 1):
            if abs(moment_sum(seq, p)) > CONSTRAINT_TOL:
                raise ValueError(f"moment constraint p={p} violated")
        stored = float(payload["prefactor"])
        fresh = result.prefactor.value
        if not math.isclose(stored, fresh, rel_tol=PREFACTOR_RTOL, abs_tol=0.0):
            raise ValueError(f"stored prefactor {stored!r} disagrees with {fresh!r}")
        if not result.kkt.residual_norm <= problem.options.tol:
            raise ValueError("stored residual exceeds the solver tolerance")
        return result

    def store(self, result: OptimizedSequence) -> Path:
        key = cache_key("PLODD", result.sequence.n, result.alpha)
        payload = result.to_json()
        payload["key"] = list(key)
        payload["solver"] = {
            "residual": result.kkt.residual_norm,
            "iterations": result.kkt.iterations,
            "version": _version(),
        }
        self.root.mkdir(parents=True, exist_ok=True)
        target = self.path(key)
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=2)
                fh.write("\n")
            os.replace(tmp, target)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise
        return target

    def solve(self, problem: PloddProblem, initial=None) -> OptimizedSequence:
        """Cached :func:`optimize_plodd`; a valid entry is returned without solving."""
        hit = self.load(problem)
        if hit is not None:
            return hit
        result = optimize_plodd(problem, initial=initial)
        self.store(result)
        result.provenance["cache"] = "miss"
        return result
