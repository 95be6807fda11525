import json
import logging
import os
import shutil
import threading
from typing import Optional

from core.errors import OutputExistsError


def ensure_directory_exists(directory: str):
    if directory and not os.path.exists(directory):
        os.makedirs(directory, exist_ok=True)


class ResultWriter:
    """
    Writes result files into one output directory.

    Every file goes through a temporary sibling and an atomic move, so a
    crashed run never leaves a half-written CSV behind. Existing files are
    only replaced when `force` is set.
    """

    def __init__(self, output_dir: str, force: bool = False):
        self.output_dir = output_dir
        self.force = force
        self.logger = logging.getLogger(__name__)
        ensure_directory_exists(output_dir)

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def check_writable(self, name: str):
        target = self.path(name)
        if os.path.exists(target) and not self.force:
            raise OutputExistsError(f"{target} already exists; pass --force to overwrite")

    def write_text(self, name: str, text: str) -> str:
        self.check_writable(name)
        target = self.path(name)
        temp_output = target + '.tmp'
        try:
            with open(temp_output, 'w', newline='\n') as output:
                output.write(text)
            shutil.move(temp_output, target)
        except Exception as e:
            if os.path.exists(temp_output):
                os.remove(temp_output)
            self.logger.error(f"Writing {target} failed: {e}")
            raise
        self.logger.debug(f"Wrote {target}")
        return target

    def write_json(self, name: str, record: dict, indent: Optional[int] = None) -> str:
        return self.write_text(name, json.dumps(record, sort_keys=True, indent=indent) + '\n')

    def open_jsonl(self, name: str) -> 'JsonLinesLog':
        self.check_writable(name)
        return JsonLinesLog(self.path(name))

    def mark_failed(self, name: str, reason: str) -> str:
        """Failure markers are always written, replacing any earlier marker"""
        target = self.path(name)
        with open(target, 'w') as f:
            f.write(reason.rstrip() + '\n')
        self.logger.error(f"Failure marker written to {target}")
        return target

    def clear_marker(self, name: str):
        target = self.path(name)
        if os.path.exists(target):
            os.remove(target)


class JsonLinesLog:
    """Line-delimited JSON records, written to a temp file and moved into place on close"""

    def __init__(self, path: str):
        self.path = path
        self.temp_path = path + '.tmp'
        self.lock = threading.Lock()
        self.records = 0
        self._file = open(self.temp_path, 'w', newline='\n')

    def append(self, record: dict):
        with self.lock:
            self._file.write(json.dumps(record, sort_keys=True) + '\n')
            self.records += 1

    def close(self, keep: bool = True):
        with self.lock:
            if self._file.closed:
                return
            self._file.close()
            if keep:
                shutil.move(self.temp_path, self.path)
            else:
                os.remove(self.temp_path)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close(keep=True)
        return False
