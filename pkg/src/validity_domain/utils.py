"""Assorted utility functions."""

import hashlib
import json
import os
import time
from fnmatch import fnmatch
from typing import Any, Tuple

import numpy as np

from .log import debug


def ensure_dir(path: str) -> str:
    """
    Create a directory (and its parents) if needed.

    Parameters
    ----------
    path : str
        The directory to create.

    Returns
    -------
    str
        The same path, for chaining.
    """
    if not os.path.isdir(path):
        debug(f'Creating directory "{path}".')
        os.makedirs(path, exist_ok=True)
    return path


def _jsonable(value: Any) -> Any:
    """
    Convert numpy containers and scalars into plain JSON values.

    >>> _jsonable({'a': np.arange(3), 'b': np.float64(0.5), 'c': (np.int64(1),)})
    {'a': [0, 1, 2], 'b': 0.5, 'c': [1]}
    >>> _jsonable(float('inf'))
    'inf'
    """
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    if isinstance(value, float) and not np.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    return value


def write_json(path: str, payload: Any):
    """
    Write ``payload`` as indented JSON with sorted keys (byte-stable output).

    Parameters
    ----------
    path : str
        Destination file.
    payload : Any
        Dictionaries, lists, numpy arrays and scalars.
    """
    with open(path, "w") as f:
        json.dump(_jsonable(payload), f, indent=2, sort_keys=True)
        f.write("\n")
    debug(f'Wrote "{path}".')


def read_json(path: str) -> Any:
    """Read a JSON file."""
    with open(path, "r") as f:
        return json.load(f)


def as_float(value: Any) -> float:
    """
    Parse floats written by :func:`write_json`, including infinities.

    >>> as_float('inf'), as_float(2)
    (inf, 2.0)
    """
    return float(value)


class Stopwatch:
    """
    Measure process CPU time and wall time of a block.

    Inside the block, :meth:`elapsed` gives the running times; on exit they
    are frozen in ``cpu_seconds`` and ``wall_seconds``.

    >>> with Stopwatch() as watch:
    ...     cpu, wall = watch.elapsed()
    >>> 0 <= cpu <= watch.cpu_seconds and 0 <= wall <= watch.wall_seconds
    True
    """

    def __init__(self):  # noqa: D107
        self.cpu_seconds = 0.0
        self.wall_seconds = 0.0
        self._cpu = self._wall = None

    def __enter__(self):  # noqa: D105
        self._cpu = time.process_time()
        self._wall = time.perf_counter()
        return self

    def __exit__(self, etype, value, traceback):  # noqa: D105
        self.cpu_seconds, self.wall_seconds = self.elapsed()
        self._cpu = self._wall = None

    def elapsed(self) -> Tuple[float, float]:
        """CPU and wall seconds since the block was entered."""
        if self._cpu is None:
            return self.cpu_seconds, self.wall_seconds
        return time.process_time() - self._cpu, time.perf_counter() - self._wall


def sha1file(file: str) -> str:
    """
    Calculate the SHA1 hash of a file.

    Parameters
    ----------
    file : str
        The path to the file

    Returns
    -------
    str
        The SHA1 hash of the file
    """
    with open(file, "rb") as f:
        hash = hashlib.sha1()
        while True:
            data = f.read(65536)
            if not data:
                break
            hash.update(data)
        return hash.hexdigest()


def digest_artifacts(directory: str, exclude=("solve*.json", "timings.*", "sru.*")) -> dict:
    """
    Hash every artifact file of a run directory.

    Files whose content carries timings are excluded by default; their
    timing-free content is compared through the JSON readers instead.

    Parameters
    ----------
    directory : str
        A run directory.
    exclude : tuple of str
        Glob patterns of base names to skip.

    Returns
    -------
    dict
        Mapping of relative path to SHA1 digest.
    """
    digests = {}
    for root, _, files in os.walk(directory):
        for name in sorted(files):
            if any(fnmatch(name, pattern) for pattern in exclude):
                continue
            path = os.path.join(root, name)
            digests[os.path.relpath(path, directory)] = sha1file(path)
    return dict(sorted(digests.items()))


if __name__ == "__main__":
    import doctest

    doctest.testmod()
