# HeraldComb: runs in a standard CPython 3.9+ environment.
"""
Time-tag streams and their binary file format.

File layout (little-endian):
    header, 16 bytes: magic b'TTG1', version u16, channel count u8, reserved u8,
                      resolution_ps u32, reserved u32
    records, 16 bytes each: timestamp_ps u64, channel u8, 7 reserved zero bytes

Records are sorted by timestamp (non-decreasing). Readers stream the body in
fixed-size chunks so memory does not grow with the file.
"""

import contextlib
import logging
import os
import struct
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from heraldcomb_errors import ConfigError, TagFormatError

logger = logging.getLogger('HeraldComb.Correlator')

MAGIC = b"TTG1"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHBBII")
RECORD_DTYPE = np.dtype([("timestamp_ps", "<u8"), ("channel", "u1"), ("reserved", "V7")])
DEFAULT_CHUNK_RECORDS = 1 << 20

assert HEADER.size == 16 and RECORD_DTYPE.itemsize == 16


class TimeTag(NamedTuple):
    timestamp_ps: int
    channel: int


class TagFileHeader(NamedTuple):
    version: int
    channel_count: int
    resolution_ps: int


@dataclass(eq=False)
class TagStream:
    """Sorted detection records held as parallel arrays."""

    timestamps: np.ndarray
    channels: np.ndarray
    channel_count: int
    resolution_ps: int = 1

    def __post_init__(self):
        self.timestamps = np.ascontiguousarray(self.timestamps, dtype=np.uint64)
        self.channels = np.ascontiguousarray(self.channels, dtype=np.uint8)
        if self.timestamps.ndim != 1 or self.timestamps.shape != self.channels.shape:
            raise ConfigError("timestamps and channels must be 1-D arrays of equal length")
        if not 1 <= int(self.channel_count) <= 255:
            raise ConfigError("channel_count must lie in 1..255, got {!r}".format(self.channel_count))
        if not 1 <= int(self.resolution_ps) < 2 ** 32:
            raise ConfigError("resolution_ps must be a positive u32, got {!r}".format(self.resolution_ps))
        self.channel_count = int(self.channel_count)
        self.resolution_ps = int(self.resolution_ps)
        if self.channels.size and int(self.channels.max()) >= self.channel_count:
            bad = int(np.argmax(self.channels >= self.channel_count))
            raise TagFormatError("record {} has channel {} but only {} channels are declared".format(
                bad, int(self.channels[bad]), self.channel_count), record_index=bad)

    def __len__(self):
        return int(self.timestamps.size)

    def __eq__(self, other):
        if not isinstance(other, TagStream):
            return NotImplemented
        return (self.channel_count == other.channel_count and self.resolution_ps == other.resolution_ps
                and np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.channels, other.channels))

    @classmethod
    def empty(cls, channel_count, resolution_ps=1):
        return cls(np.empty(0, np.uint64), np.empty(0, np.uint8), channel_count, resolution_ps)

    @classmethod
    def concatenate(cls, streams, channel_count=None, resolution_ps=None):
        streams = list(streams)
        if not streams:
            if channel_count is None:
                raise ConfigError("cannot concatenate zero streams without a channel count")
            return cls.empty(channel_count, resolution_ps or 1)
        return cls(
            np.concatenate([s.timestamps for s in streams]),
            np.concatenate([s.channels for s in streams]),
            channel_count if channel_count is not None else max(s.channel_count for s in streams),
            resolution_ps if resolution_ps is not None else streams[0].resolution_ps,
        )

    def first_unsorted_index(self):
        """Index of the first record earlier than its predecessor, or None."""
        inversions = np.flatnonzero(self.timestamps[1:] < self.timestamps[:-1])
        return int(inversions[0]) + 1 if inversions.size else None

    def check_sorted(self):
        bad = self.first_unsorted_index()
        if bad is not None:
            raise TagFormatError("timestamp inversion at record {}".format(bad), record_index=bad)

    def channel(self, ch):
        return self.timestamps[self.channels == ch]

    def counts_per_channel(self):
        return np.bincount(self.channels, minlength=self.channel_count)

    def shifted(self, offset_ps):
        """Copy with every timestamp moved by ``offset_ps`` (may be negative)."""
        offset_ps = int(offset_ps)
        if offset_ps < 0 and len(self) and int(self.timestamps[0]) < -offset_ps:
            raise ConfigError("shift of {} ps would make timestamps negative".format(offset_ps))
        if offset_ps >= 0:
            moved = self.timestamps + np.uint64(offset_ps)
        else:
            moved = self.timestamps - np.uint64(-offset_ps)
        return TagStream(moved, self.channels.copy(), self.channel_count, self.resolution_ps)

    def split(self, n_chunks):
        """Split into ``n_chunks`` consecutive pieces (some may be empty)."""
        bounds = np.linspace(0, len(self), int(n_chunks) + 1).astype(int)
        return [self.slice(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]

    def slice(self, start, stop):
        return TagStream(self.timestamps[start:stop], self.channels[start:stop], self.channel_count, self.resolution_ps)

    def tags(self) -> Iterator[TimeTag]:
        for ts, ch in zip(self.timestamps.tolist(), self.channels.tolist()):
            yield TimeTag(ts, ch)

    @property
    def span_ps(self):
        if not len(self):
            return 0
        return int(self.timestamps[-1]) - int(self.timestamps[0])


@contextlib.contextmanager
def _binary_handle(target, mode):
    if hasattr(target, "read" if "r" in mode else "write"):
        yield target
        return
    if "r" not in mode:
        with open(os.fspath(target), mode) as handle:
            yield handle
        return
    try:
        handle = open(os.fspath(target), mode)
    except OSError as e:
        raise TagFormatError("cannot read tag file {}: {}".format(os.fspath(target), e.strerror or e)) from e
    with handle:
        yield handle


def _read_exact(handle, n_bytes):
    parts = []
    remaining = n_bytes
    while remaining > 0:
        block = handle.read(remaining)
        if not block:
            break
        parts.append(block)
        remaining -= len(block)
    return b"".join(parts)


def _parse_header(raw):
    if len(raw) < HEADER.size:
        raise TagFormatError("tag file is shorter than its {}-byte header".format(HEADER.size))
    magic, version, channel_count, _, resolution_ps, _ = HEADER.unpack(raw)
    if magic != MAGIC:
        raise TagFormatError("bad magic {!r}; expected {!r}".format(magic, MAGIC))
    if version != FORMAT_VERSION:
        raise TagFormatError("unsupported tag format version {} (this reader handles {})".format(version, FORMAT_VERSION))
    if channel_count < 1 or resolution_ps < 1:
        raise TagFormatError("header declares {} channels at {} ps resolution".format(channel_count, resolution_ps))
    return TagFileHeader(version, channel_count, resolution_ps)


def read_header(source):
    with _binary_handle(source, "rb") as handle:
        return _parse_header(_read_exact(handle, HEADER.size))


def write_tags(stream, sink, chunk_records=DEFAULT_CHUNK_RECORDS):
    """Write a sorted TagStream to a path or binary file object.

    Returns:
        int: number of records written.
    """
    stream.check_sorted()
    with _binary_handle(sink, "wb") as handle:
        handle.write(HEADER.pack(MAGIC, FORMAT_VERSION, stream.channel_count, 0, stream.resolution_ps, 0))
        for start in range(0, len(stream), chunk_records):
            stop = min(start + chunk_records, len(stream))
            records = np.zeros(stop - start, dtype=RECORD_DTYPE)
            records["timestamp_ps"] = stream.timestamps[start:stop]
            records["channel"] = stream.channels[start:stop]
            handle.write(records.tobytes())
    logger.debug("Wrote %d tags (%d channels).", len(stream), stream.channel_count)
    return len(stream)


def _body_chunks(handle, header, chunk_records):
    offset = 0
    previous_last = None
    while True:
        raw = _read_exact(handle, chunk_records * RECORD_DTYPE.itemsize)
        if not raw:
            break
        if len(raw) % RECORD_DTYPE.itemsize:
            bad = offset + len(raw) // RECORD_DTYPE.itemsize
            raise TagFormatError("truncated record at index {}".format(bad), record_index=bad)
        records = np.frombuffer(raw, dtype=RECORD_DTYPE)
        timestamps = records["timestamp_ps"].astype(np.uint64)
        channels = records["channel"].copy()

        if previous_last is not None and timestamps[0] < previous_last:
            raise TagFormatError("timestamp inversion at record {}".format(offset), record_index=offset)
        inversions = np.flatnonzero(timestamps[1:] < timestamps[:-1])
        if inversions.size:
            bad = offset + int(inversions[0]) + 1
            raise TagFormatError("timestamp inversion at record {}".format(bad), record_index=bad)
        out_of_range = np.flatnonzero(channels >= header.channel_count)
        if out_of_range.size:
            bad = offset + int(out_of_range[0])
            raise TagFormatError("record {} has channel {} but the header declares {} channels".format(
                bad, int(channels[out_of_range[0]]), header.channel_count), record_index=bad)

        yield TagStream(timestamps, channels, header.channel_count, header.resolution_ps)
        previous_last = timestamps[-1]
        offset += records.size


def iter_tag_chunks(source, chunk_records=DEFAULT_CHUNK_RECORDS) -> Iterator[TagStream]:
    """Yield the records of a tag file as consecutive TagStream chunks.

    Sorting and channel range are validated across chunk boundaries; the
    error names the absolute index of the first offending record.

    Raises:
        TagFormatError: on any header or body violation.
    """
    if chunk_records < 1:
        raise ConfigError("chunk_records must be >= 1")
    with _binary_handle(source, "rb") as handle:
        header = _parse_header(_read_exact(handle, HEADER.size))
        yield from _body_chunks(handle, header, chunk_records)


def read_tags(source, chunk_records=DEFAULT_CHUNK_RECORDS):
    """Read a whole tag file into one TagStream."""
    with _binary_handle(source, "rb") as handle:
        header = _parse_header(_read_exact(handle, HEADER.size))
        chunks = list(_body_chunks(handle, header, chunk_records))
    return TagStream.concatenate(chunks, header.channel_count, header.resolution_ps)
