"""Checkpoint and trace files.

Checkpoint layout::

    GCNN1\\n
    {"geometry": ..., "L": ..., ..., "n_params": P}\\n
    P little-endian float64 values (the flat parameter vector)
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .exceptions import CheckpointError
from .gcnn import GcnnConfig, Wavefunction

MAGIC = b"GCNN1"
HEADER_FIELDS = ("geometry", "L", "n_layers", "width", "masking", "support", "seed", "n_params")


def checkpoint_header(wf: Wavefunction) -> dict:
    cfg = wf.config
    header = {
        "geometry": wf.lattice.geometry,
        "L": wf.lattice.L,
        "n_layers": cfg.n_layers,
        "width": cfg.width,
        "masking": cfg.masking,
        "support": cfg.support,
        "seed": cfg.seed,
        "n_params": wf.n_params,
    }
    chi = wf.character
    if not np.allclose(chi, 1):
        header["character"] = [[float(c.real), float(c.imag)] for c in chi]
    return header


def save_checkpoint(wf: Wavefunction, path) -> None:
    header = json.dumps(checkpoint_header(wf), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + b"\n" + header + b"\n")
        fh.write(np.asarray(wf.get_flat(), dtype="<f8").tobytes())


def read_checkpoint(path) -> tuple[dict, np.ndarray]:
    """Header dict and parameter vector; raises ``CheckpointError`` on any defect."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    magic, sep, rest = raw.partition(b"\n")
    if magic != MAGIC or not sep:
        raise CheckpointError(f"{path}: bad magic {magic[:16]!r}")
    line, sep, payload = rest.partition(b"\n")
    if not sep:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: malformed header ({exc})") from exc
    missing = [k for k in HEADER_FIELDS if k not in header]
    if missing:
        raise CheckpointError(f"{path}: header lacks {missing}")
    expected = 8 * int(header["n_params"])
    if len(payload) != expected:
        raise CheckpointError(
            f"{path}: parameter block has {len(payload)} bytes, header promises {expected}"
        )
    return header, np.frombuffer(payload, dtype="<f8").astype(float)


def header_diff(header: dict, wf: Wavefunction) -> dict:
    """Fields on which a checkpoint header disagrees with a wavefunction."""
    mine = checkpoint_header(wf)
    return {
        k: (header.get(k), mine.get(k))
        for k in HEADER_FIELDS
        if k != "seed" and header.get(k) != mine.get(k)
    }


def load_into(wf: Wavefunction, path) -> dict:
    header, theta = read_checkpoint(path)
    diff = header_diff(header, wf)
    if diff:
        detail = ", ".join(f"{k}: checkpoint={a!r} config={b!r}" for k, (a, b) in diff.items())
        raise CheckpointError(f"architecture mismatch ({detail})")
    wf.set_flat(theta)
    return header


def config_from_header(header: dict) -> GcnnConfig:
    chi = header.get("character")
    if chi is not None:
        chi = np.array([complex(a, b) for a, b in chi])
    return GcnnConfig(
        n_layers=header["n_layers"],
        width=header["width"],
        masking=header["masking"],
        support=header["support"],
        character=chi,
        seed=header["seed"],
    )


class TraceWriter:
    """Line-delimited JSON trace; usable directly as a training sink."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w")
        self.records: list[dict] = []

    def __call__(self, record: dict) -> None:
        self.records.append(record)
        self._fh.write(json.dumps(record) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_trace(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
