"""Checksum-verified model download with resume support.

A manifest is a small JSON document: {"url", "bytes", "md5", "name",
"version"}. fetch_model verifies any existing destination file first and
skips the network entirely on a match. Downloads stream into a ".part"
temp file next to the destination; an interrupted transfer keeps the temp
file and the next attempt resumes it with an HTTP Range request when the
server cooperates. Only a temp file whose MD5 matches the manifest is
renamed into place, atomically, so the destination never holds bytes that
fail verification.
"""

from __future__ import annotations

import errno
import json
import os
import re
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Callable

from .errors import ChecksumMismatch, DiskFull, FormatError, NetworkError
from .modelfile import md5_file

_MD5_RE = re.compile(r"^[0-9a-f]{32}$")
CHUNK_BYTES = 64 * 1024

ProgressFn = Callable[[int, int], None]


@dataclass(frozen=True)
class ModelManifest:
    url: str
    total_bytes: int
    md5_hex: str
    name: str
    format_version: int = 1

    def __post_init__(self):
        if not _MD5_RE.match(self.md5_hex):
            raise FormatError(f"manifest md5 must be 32 lowercase hex chars: {self.md5_hex!r}")
        if self.total_bytes < 0:
            raise FormatError("manifest byte count must be >= 0")

    def to_dict(self) -> dict:
        return {
            "url": self.url,
            "bytes": self.total_bytes,
            "md5": self.md5_hex,
            "name": self.name,
            "version": self.format_version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelManifest":
        return cls(
            url=d["url"],
            total_bytes=int(d["bytes"]),
            md5_hex=d["md5"],
            name=d["name"],
            format_version=int(d.get("version", 1)),
        )


def save_manifest(manifest: ModelManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest.to_dict(), f, indent=2)
        f.write("\n")


def load_manifest(path) -> ModelManifest:
    with open(path, "r", encoding="utf-8") as f:
        return ModelManifest.from_dict(json.load(f))


def _raise_transfer_error(exc: Exception, temp_path) -> None:
    if isinstance(exc, OSError) and exc.errno == errno.ENOSPC:
        raise DiskFull(f"no space left while writing {temp_path}") from exc
    raise NetworkError(f"transfer failed ({exc}); partial file kept at {temp_path}") from exc


def fetch_model(
    manifest: ModelManifest,
    dest_dir,
    progress: ProgressFn | None = None,
) -> str:
    """Ensure a verified copy of the manifest's file exists under dest_dir.

    Returns the installed path. Skips the network when a valid file is
    already present. progress(bytes_done, total) is monotone non-decreasing
    and ends with done == total on a completed transfer.
    """
    os.makedirs(dest_dir, exist_ok=True)
    dest = os.path.join(dest_dir, manifest.name)
    if os.path.exists(dest) and md5_file(dest) == manifest.md5_hex:
        return dest

    temp = dest + ".part"
    done = os.path.getsize(temp) if os.path.exists(temp) else 0
    total = manifest.total_bytes
    if done > total:
        os.remove(temp)  # stale oversized partial cannot belong to this file
        done = 0

    request = urllib.request.Request(manifest.url)
    mode = "wb"
    if 0 < done < total:
        request.add_header("Range", f"bytes={done}-")
        mode = "ab"

    if done < total or total == 0:
        try:
            response = urllib.request.urlopen(request)
        except (urllib.error.URLError, OSError) as e:
            _raise_transfer_error(e, temp)
        with response:
            if mode == "ab" and response.status != 206:
                # server ignored the range request; restart from scratch
                mode, done = "wb", 0
            try:
                with open(temp, mode) as out:
                    if progress is not None:
                        progress(done, total)
                    while True:
                        chunk = response.read(CHUNK_BYTES)
                        if not chunk:
                            break
                        out.write(chunk)
                        done += len(chunk)
                        if progress is not None:
                            progress(done, total)
            except OSError as e:
                _raise_transfer_error(e, temp)
        if done < total:
            raise NetworkError(
                f"connection closed early at {done}/{total} bytes; partial kept at {temp}"
            )

    if md5_file(temp) != manifest.md5_hex:
        os.remove(temp)
        raise ChecksumMismatch(
            f"{manifest.name}: downloaded bytes do not match manifest md5; temp removed"
        )
    os.replace(temp, dest)
    return dest
