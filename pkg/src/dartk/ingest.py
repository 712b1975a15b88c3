"""Reading and writing continuous EEG recordings.

Two on-disk formats are understood:

* the BrainVision triplet (``.vhdr`` header, ``.vmrk`` markers, binary
  payload), multiplexed INT_16 or IEEE_FLOAT_32, little-endian;
* the toolkit interchange format: a JSON sidecar (magic ``DARTK1``) next to
  a raw little-endian float64 channel-major payload, with a SHA-256 of the
  payload stored in the sidecar.

All amplitudes are held in microvolts.
"""
from __future__ import annotations

import configparser
import enum
import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ChecksumMismatch,
    InvalidManifest,
    IoFailure,
    MissingChannel,
    MissingCompanionFile,
    TruncatedData,
    UnsupportedEncoding,
)

logger = logging.getLogger(__name__)

INTERCHANGE_MAGIC = "DARTK1"
INTERCHANGE_VERSION = 1


class MarkerKind(str, enum.Enum):
    VOLUME_TRIGGER = "VolumeTrigger"
    CARDIAC_PEAK = "CardiacPeak"
    OTHER = "Other"


@dataclass(frozen=True, order=True)
class Marker:
    position: int
    kind: MarkerKind = field(compare=False)
    description: str = field(default="", compare=False)

    def __post_init__(self):
        if self.position < 0:
            raise ValueError(f"marker position must be >= 0, got {self.position}")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "position": int(self.position),
                "description": self.description}

    @classmethod
    def from_dict(cls, d: dict) -> "Marker":
        return cls(int(d["position"]), MarkerKind(d["kind"]), d.get("description", ""))


class Recording:
    """Continuous multichannel recording.

    Parameters
    ----------
    data : array, shape (n_channels, n_samples)
        Samples in microvolts; stored as float64.
    sampling_rate : float
        Hz, strictly positive.
    channel_labels : sequence of str
        One unique label per row of ``data``.
    markers : iterable of Marker
        Sorted by position on construction; every position must lie in
        ``[0, n_samples)``.
    """

    __slots__ = ("data", "sampling_rate", "channel_labels", "markers")

    def __init__(self, data, sampling_rate: float, channel_labels: Sequence[str],
                 markers: Iterable[Marker] = ()):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"data must be 2-D (channels, samples), got shape {data.shape}")
        labels = tuple(str(c) for c in channel_labels)
        if len(labels) != data.shape[0]:
            raise ValueError(f"{len(labels)} labels for {data.shape[0]} channels")
        if len(set(labels)) != len(labels):
            raise ValueError("channel labels must be unique")
        if not sampling_rate > 0:
            raise ValueError(f"sampling_rate must be > 0, got {sampling_rate}")
        markers = tuple(sorted(markers))
        n = data.shape[1]
        for m in markers:
            if not 0 <= m.position < n:
                raise ValueError(f"marker at {m.position} outside [0, {n})")
        self.data = data
        self.sampling_rate = float(sampling_rate)
        self.channel_labels = labels
        self.markers = markers

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sampling_rate

    def markers_of(self, kind: MarkerKind) -> np.ndarray:
        return np.array([m.position for m in self.markers if m.kind == kind], dtype=np.int64)

    def replace(self, **changes) -> "Recording":
        kw = dict(data=self.data, sampling_rate=self.sampling_rate,
                  channel_labels=self.channel_labels, markers=self.markers)
        kw.update(changes)
        return Recording(**kw)

    def __eq__(self, other):
        if not isinstance(other, Recording):
            return NotImplemented
        return (self.sampling_rate == other.sampling_rate
                and self.channel_labels == other.channel_labels
                and self.markers == other.markers
                and all(a.kind == b.kind and a.description == b.description
                        for a, b in zip(self.markers, other.markers))
                and self.data.shape == other.data.shape
                and self.data.tobytes() == other.data.tobytes())

    __hash__ = None

    def __repr__(self):
        return (f"Recording({self.n_channels} ch x {self.n_samples} samples @ "
                f"{self.sampling_rate:g} Hz, {len(self.markers)} markers)")


# --------------------------------------------------------------------------
# BrainVision


# descriptions the scanner writes for each volume, and common cardiac labels
DEFAULT_VOLUME_PATTERN = r"^(R\s*128|T\s*1|Volume.*|V\s*1)$"
DEFAULT_CARDIAC_PATTERN = r"(QRS|Pulse|ECG|R-peak|CardiacPeak)"

_UNIT_SCALE = {"µv": 1.0, "μv": 1.0, "uv": 1.0, "": 1.0, "mv": 1e3, "nv": 1e-3, "v": 1e6}
_BINARY_DTYPES = {"INT_16": np.dtype("<i2"), "IEEE_FLOAT_32": np.dtype("<f4")}


def _read_ini(path: Path) -> configparser.ConfigParser:
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        text = raw.decode("latin-1")
    # the first line is a free-text identification line, not INI
    start = text.find("[")
    if start < 0:
        raise UnsupportedEncoding(f"{path}: no sections found")
    cp = configparser.ConfigParser(interpolation=None, strict=False,
                                   comment_prefixes=(";",), inline_comment_prefixes=None)
    cp.optionxform = str
    try:
        cp.read_string(text[start:], source=str(path))
    except configparser.Error as exc:
        raise UnsupportedEncoding(f"{path}: {exc}") from exc
    return cp


def _required(cp, section, key, path):
    try:
        return cp[section][key].strip()
    except KeyError:
        raise UnsupportedEncoding(f"{path}: missing [{section}] {key}") from None


def classify_marker(mtype: str, description: str,
                    volume_pattern: str = DEFAULT_VOLUME_PATTERN,
                    cardiac_pattern: str = DEFAULT_CARDIAC_PATTERN) -> MarkerKind:
    desc = description.strip()
    if re.search(volume_pattern, desc) or mtype.strip().lower() == "volume":
        return MarkerKind.VOLUME_TRIGGER
    if re.search(cardiac_pattern, desc, re.IGNORECASE) or re.search(cardiac_pattern, mtype, re.IGNORECASE):
        return MarkerKind.CARDIAC_PEAK
    return MarkerKind.OTHER


def read_vmrk(path, n_samples: int | None = None, **patterns) -> list[Marker]:
    """Parse a BrainVision marker file. Positions become 0-based."""
    path = Path(path)
    cp = _read_ini(path)
    out = []
    if "Marker Infos" not in cp:
        return out
    for key, value in cp["Marker Infos"].items():
        if not key.lower().startswith("mk"):
            continue
        parts = [p.replace(r"\1", ",") for p in value.split(",")]
        if len(parts) < 3:
            logger.warning("%s: skipping malformed marker %s=%s", path, key, value)
            continue
        mtype, desc = parts[0], parts[1]
        pos = int(float(parts[2])) - 1
        if pos < 0 or (n_samples is not None and pos >= n_samples):
            logger.warning("%s: marker %s at %d outside recording, dropped", path, key, pos)
            continue
        out.append(Marker(pos, classify_marker(mtype, desc, **patterns), desc.strip() or mtype.strip()))
    out.sort()
    return out


def parse_brainvision(header_path, **patterns) -> Recording:
    """Read a BrainVision ``.vhdr`` and its companions into a Recording.

    INT_16 samples are scaled by the per-channel resolution; channel units
    other than microvolts are converted. Vectorized orientation, ASCII data
    and other binary formats raise :class:`UnsupportedEncoding`.
    """
    header_path = Path(header_path)
    if not header_path.is_file():
        raise MissingCompanionFile(f"header not found: {header_path}")
    cp = _read_ini(header_path)
    ci = "Common Infos"
    data_file = header_path.parent / _required(cp, ci, "DataFile", header_path)
    marker_name = cp[ci].get("MarkerFile", "").strip() if ci in cp else ""
    marker_file = header_path.parent / marker_name if marker_name else None
    if not data_file.is_file():
        raise MissingCompanionFile(f"data file referenced by {header_path} not found: {data_file}")
    if marker_file is None or not marker_file.is_file():
        raise MissingCompanionFile(f"marker file referenced by {header_path} not found: {marker_file}")

    fmt = cp[ci].get("DataFormat", "BINARY").strip().upper()
    if fmt != "BINARY":
        raise UnsupportedEncoding(f"{header_path}: DataFormat={fmt} unsupported")
    orient = cp[ci].get("DataOrientation", "MULTIPLEXED").strip().upper()
    if orient != "MULTIPLEXED":
        raise UnsupportedEncoding(f"{header_path}: DataOrientation={orient} unsupported")
    n_channels = int(_required(cp, ci, "NumberOfChannels", header_path))
    interval_us = float(_required(cp, ci, "SamplingInterval", header_path))
    binfmt = cp["Binary Infos"].get("BinaryFormat", "").strip().upper() if "Binary Infos" in cp else ""
    if binfmt not in _BINARY_DTYPES:
        raise UnsupportedEncoding(f"{header_path}: BinaryFormat={binfmt!r} unsupported")
    dtype = _BINARY_DTYPES[binfmt]

    labels, scales = [], []
    chans = cp["Channel Infos"] if "Channel Infos" in cp else {}
    for i in range(1, n_channels + 1):
        if f"Ch{i}" not in chans:
            raise UnsupportedEncoding(f"{header_path}: missing channel entry Ch{i}")
        props = [p.replace(r"\1", ",") for p in chans[f"Ch{i}"].split(",")]
        labels.append(props[0].strip())
        res = float(props[2]) if len(props) > 2 and props[2].strip() else 1.0
        unit = props[3].strip().lower() if len(props) > 3 else ""
        if unit not in _UNIT_SCALE:
            raise UnsupportedEncoding(f"{header_path}: channel {props[0]} unit {unit!r}")
        scales.append(res * _UNIT_SCALE[unit])

    payload = data_file.read_bytes()
    frame = n_channels * dtype.itemsize
    if len(payload) % frame:
        raise TruncatedData(f"{data_file}: {len(payload)} bytes is not a multiple of "
                            f"{n_channels} channels x {dtype.itemsize} bytes")
    raw = np.frombuffer(payload, dtype=dtype).reshape(-1, n_channels).T
    data = raw.astype(np.float64) * np.asarray(scales, dtype=np.float64)[:, None]
    markers = read_vmrk(marker_file, n_samples=data.shape[1], **patterns)
    return Recording(data, 1e6 / interval_us, labels, markers)


def write_brainvision(rec: Recording, header_path, binary_format: str = "IEEE_FLOAT_32",
                      resolution: float = 1.0) -> None:
    """Write a minimal BrainVision triplet; used for fixtures and export."""
    header_path = Path(header_path)
    stem = header_path.stem
    dtype = _BINARY_DTYPES[binary_format]
    if binary_format == "INT_16":
        raw = np.round(rec.data / resolution).astype(dtype)
    else:
        raw = rec.data.astype(dtype)
        resolution = 1.0
    lines = ["Brain Vision Data Exchange Header File Version 1.0", "",
             "[Common Infos]", "Codepage=UTF-8", f"DataFile={stem}.eeg",
             f"MarkerFile={stem}.vmrk", "DataFormat=BINARY", "DataOrientation=MULTIPLEXED",
             f"NumberOfChannels={rec.n_channels}",
             f"SamplingInterval={1e6 / rec.sampling_rate:.10g}", "",
             "[Binary Infos]", f"BinaryFormat={binary_format}", "", "[Channel Infos]"]
    lines += [f"Ch{i + 1}={lab.replace(',', chr(92) + '1')},,{resolution:g},µV"
              for i, lab in enumerate(rec.channel_labels)]
    header_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    (header_path.parent / f"{stem}.eeg").write_bytes(np.ascontiguousarray(raw.T).tobytes())
    mk = ["Brain Vision Data Exchange Marker File, Version 1.0", "", "[Common Infos]",
          "Codepage=UTF-8", f"DataFile={stem}.eeg", "", "[Marker Infos]"]
    for i, m in enumerate(rec.markers, 1):
        mtype = {"VolumeTrigger": "Response", "CardiacPeak": "Comment"}.get(m.kind.value, "Comment")
        desc = m.description or m.kind.value
        mk.append(f"Mk{i}={mtype},{desc.replace(',', chr(92) + '1')},{m.position + 1},1,0")
    (header_path.parent / f"{stem}.vmrk").write_text("\n".join(mk) + "\n", encoding="utf-8")


def select_analysis_channels(rec: Recording, wanted: Sequence[str]) -> Recording:
    """Restrict to ``wanted`` labels, in the order given."""
    index = {lab: i for i, lab in enumerate(rec.channel_labels)}
    missing = [w for w in wanted if w not in index]
    if missing:
        raise MissingChannel(f"channel(s) not in recording: {', '.join(missing)}")
    rows = [index[w] for w in wanted]
    return rec.replace(data=rec.data[rows], channel_labels=tuple(wanted))


# --------------------------------------------------------------------------
# interchange format


def _interchange_paths(path) -> tuple[Path, Path]:
    path = Path(path)
    if path.suffix in (".json", ".f64"):
        path = path.with_suffix("")
    return path.with_suffix(".json"), path.with_suffix(".f64")


def write_interchange(rec: Recording, path) -> Path:
    """Write ``rec``; returns the sidecar path."""
    sidecar, payload = _interchange_paths(path)
    blob = np.ascontiguousarray(rec.data, dtype="<f8").tobytes()
    meta = {
        "magic": INTERCHANGE_MAGIC,
        "version": INTERCHANGE_VERSION,
        "n_channels": rec.n_channels,
        "n_samples": rec.n_samples,
        "sampling_rate": rec.sampling_rate.hex(),
        "channel_labels": list(rec.channel_labels),
        "markers": [m.to_dict() for m in rec.markers],
        "payload": payload.name,
        "sha256": hashlib.sha256(blob).hexdigest(),
    }
    try:
        sidecar.parent.mkdir(parents=True, exist_ok=True)
        payload.write_bytes(blob)
        sidecar.write_text(json.dumps(meta, indent=1), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {sidecar}: {exc}") from exc
    return sidecar


def read_interchange(path) -> Recording:
    sidecar, _ = _interchange_paths(path)
    try:
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise IoFailure(f"no such file: {sidecar}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise IoFailure(f"cannot read {sidecar}: {exc}") from exc
    if meta.get("magic") != INTERCHANGE_MAGIC:
        raise IoFailure(f"{sidecar}: not a {INTERCHANGE_MAGIC} sidecar")
    payload = sidecar.parent / meta["payload"]
    try:
        blob = payload.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read payload {payload}: {exc}") from exc
    if hashlib.sha256(blob).hexdigest() != meta["sha256"]:
        raise ChecksumMismatch(f"{payload}: payload checksum does not match sidecar")
    shape = (meta["n_channels"], meta["n_samples"])
    if len(blob) != 8 * shape[0] * shape[1]:
        raise TruncatedData(f"{payload}: expected {8 * shape[0] * shape[1]} bytes, got {len(blob)}")
    data = np.frombuffer(blob, dtype="<f8").reshape(shape).astype(np.float64)
    return Recording(data, float.fromhex(meta["sampling_rate"]), meta["channel_labels"],
                     [Marker.from_dict(m) for m in meta["markers"]])


def load_recording(path, **patterns) -> Recording:
    """Dispatch on suffix: ``.vhdr`` is BrainVision, anything else interchange."""
    path = Path(path)
    if path.suffix.lower() == ".vhdr":
        return parse_brainvision(path, **patterns)
    return read_interchange(path)


# --------------------------------------------------------------------------
# dataset manifest


@dataclass(frozen=True)
class ManifestEntry:
    subject_id: str
    condition: str
    path: Path
    role: str  # "noisy" | "clean"


@dataclass
class DatasetManifest:
    """Paired noisy/clean recordings per subject and condition.

    The manifest names the analysis channel list explicitly; nothing about
    which channels are usable is hard-coded.
    """

    entries: list[ManifestEntry]
    channels: list[str] | None = None
    excluded: dict[str, str] = field(default_factory=dict)
    root: Path = Path(".")

    def __post_init__(self):
        for e in self.entries:
            if e.role not in ("noisy", "clean"):
                raise InvalidManifest(f"role must be noisy|clean, got {e.role!r}")
        keys = {}
        for e in self.entries:
            if (e.subject_id, e.condition, e.role) in keys:
                raise InvalidManifest(f"duplicate {e.role} entry for {e.subject_id}/{e.condition}")
            keys[(e.subject_id, e.condition, e.role)] = e
        for (sid, cond, role) in keys:
            if role == "noisy" and (sid, cond, "clean") not in keys:
                raise InvalidManifest(f"noisy entry {sid}/{cond} has no clean reference")
            if role == "clean" and (sid, cond, "noisy") not in keys:
                raise InvalidManifest(f"clean entry {sid}/{cond} has no noisy counterpart")

    def pairs(self) -> list[tuple[str, str, Path, Path]]:
        """(subject, condition, noisy path, clean path), excluded subjects dropped."""
        noisy = {(e.subject_id, e.condition): e.path for e in self.entries if e.role == "noisy"}
        clean = {(e.subject_id, e.condition): e.path for e in self.entries if e.role == "clean"}
        out = []
        for key in sorted(noisy):
            if key[0] in self.excluded:
                continue
            out.append((key[0], key[1], self.root / noisy[key], self.root / clean[key]))
        return out

    @property
    def subjects(self) -> list[str]:
        return sorted({sid for sid, *_ in self.pairs()})

    def to_dict(self) -> dict:
        return {
            "channels": self.channels,
            "subjects": [{"subject_id": e.subject_id, "condition": e.condition,
                          "role": e.role, "path": str(e.path)} for e in self.entries],
            "excluded": [{"subject_id": s, "reason": r} for s, r in self.excluded.items()],
        }

    @classmethod
    def from_dict(cls, d: dict, root=".") -> "DatasetManifest":
        try:
            entries = [ManifestEntry(str(s["subject_id"]), str(s.get("condition", "default")),
                                     Path(s["path"]), s["role"]) for s in d["subjects"]]
        except (KeyError, TypeError) as exc:
            raise InvalidManifest(f"malformed manifest: {exc}") from exc
        excluded = {str(x["subject_id"]): x.get("reason", "") for x in d.get("excluded", [])}
        return cls(entries, d.get("channels"), excluded, Path(root))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        if not path.is_file():
            raise IoFailure(f"manifest not found: {path}")
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".toml":
            import tomli
            d = tomli.loads(text)
        else:
            d = json.loads(text)
        return cls.from_dict(d, root=path.parent)
