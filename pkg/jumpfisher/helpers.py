# Global imports
import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, TypeVar

import numpy as np

from jumpfisher.errors import ConfigError

T = TypeVar("T")


def set_logger(log_file: Optional[str], log_level: int) -> None:

    root_log = logging.getLogger()
    root_log.setLevel(log_level)
    for handler in list(root_log.handlers):
        root_log.removeHandler(handler)

    if log_file:
        file_handler = logging.FileHandler(
            filename=log_file, mode="w", encoding="utf-8"
        )
        file_handler.setLevel(log_level)
        file_handler.setFormatter(
            logging.Formatter(
                fmt="[{asctime}][{levelname}][{funcName}] {message}", style="{"
            )
        )
        root_log.addHandler(file_handler)

    stream_handler = logging.StreamHandler()
    stream_handler.setLevel(log_level)
    stream_handler.setFormatter(
        logging.Formatter(fmt="[{levelname}] {message}", style="{")
    )
    root_log.addHandler(stream_handler)


def parse_assignments(text: Optional[str]) -> Dict[str, Any]:
    """Parse ``name=value,name=value`` into a dict of numbers and booleans."""
    values: Dict[str, Any] = {}
    if not text:
        return values
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ConfigError(f"Expected name=value, got '{item}'")
        name, raw = (part.strip() for part in item.split("=", 1))
        if raw.lower() in ("true", "false"):
            values[name] = raw.lower() == "true"
            continue
        try:
            values[name] = float(raw)
        except ValueError as err:
            raise ConfigError(f"Value of '{name}' is not a number: '{raw}'") from err
    return values


def parse_sweep(text: str) -> tuple:
    """Parse ``name=start:stop:count`` into (name, values)."""
    try:
        name, spec = text.split("=", 1)
        start, stop, count = spec.split(":")
        values = np.linspace(float(start), float(stop), int(count))
    except ValueError as err:
        raise ConfigError(
            f"Sweep must look like name=start:stop:count, got '{text}'"
        ) from err
    return name.strip(), values


def map_ordered(worker: Callable[[int], T], count: int, threads: int = 1) -> List[T]:
    """Run ``worker(i)`` for i in range(count), results in index order."""
    if threads <= 1 or count <= 1:
        return [worker(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(worker, range(count)))


def to_jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    if hasattr(value, "value") and hasattr(value, "name"):
        return value.value
    return value


def write_json(path: str, content: Any) -> str:
    with open(file=path, mode="w", encoding="utf-8") as out:
        json.dump(to_jsonable(content), out, indent=4, ensure_ascii=False)
    logging.info(f"Wrote {path}")
    return path


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    with open(file=path, mode="w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(header)
        for row in rows:
            writer.writerow([to_jsonable(item) for item in row])
    logging.info(f"Wrote {path}")
    return path


def file_digest(path: str) -> str:
    sha = hashlib.sha256()
    with open(file=path, mode="rb") as source:
        for chunk in iter(lambda: source.read(1 << 16), b""):
            sha.update(chunk)
    return sha.hexdigest()


def ensure_dir(path: str) -> str:
    if not os.path.isdir(path):
        os.makedirs(path)
        logging.info(f"Create output folder {path}")
    return path
