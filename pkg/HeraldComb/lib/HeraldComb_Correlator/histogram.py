# HeraldComb: runs in a standard CPython 3.9+ environment.
"""
All-pairs coincidence histograms of time-tag streams.

Bins are centred on k * bin_width for k = -K..K, with edges at (k -+ 1/2) * bin_width.
A delay exactly on an edge goes to the bin farther from zero, so swapping the
reference and signal channels mirrors the histogram exactly.
"""

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from heraldcomb_errors import ConfigError, TagFormatError
from HeraldComb_Correlator.tag_io import TagStream

logger = logging.getLogger('HeraldComb.Correlator')

_INT64_LIMIT = np.uint64(2 ** 63)


@njit(cache=True, nogil=True)
def _sweep_pairs(timestamps, channels, left, start, stop, ch_ref, ch_sig, bin_width, half_bins, span, counts):
    """Count every pair (i < j, j in [start, stop)) with |t_j - t_i| <= span.

    Each pair is counted once, at its later tag j.
    """
    two_w = 2 * bin_width
    one = np.uint64(1)
    for j in range(start, stop):
        cj = channels[j]
        if cj != ch_ref and cj != ch_sig:
            continue
        tj = timestamps[j]
        while tj - timestamps[left] > span:
            left += 1
        for i in range(left, j):
            ci = channels[i]
            d = tj - timestamps[i]
            k = (2 * d + bin_width) // two_w
            if k > half_bins:
                continue
            if ci == ch_ref and cj == ch_sig:
                counts[half_bins + k] += one
            if ci == ch_sig and cj == ch_ref:
                counts[half_bins - k] += one
    return left


@dataclass(eq=False)
class HistogramResult:
    """Binned coincidence counts of t_sig - t_ref."""

    bin_width_ps: int
    half_bins: int
    counts: np.ndarray
    n_ref_events: int = 0
    n_sig_events: int = 0

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.uint64)
        if self.counts.shape != (2 * self.half_bins + 1,):
            raise ConfigError("counts must hold 2*half_bins+1 = {} bins".format(2 * self.half_bins + 1))

    def __eq__(self, other):
        if not isinstance(other, HistogramResult):
            return NotImplemented
        return (self.bin_width_ps == other.bin_width_ps and self.half_bins == other.half_bins
                and self.n_ref_events == other.n_ref_events and self.n_sig_events == other.n_sig_events
                and np.array_equal(self.counts, other.counts))

    @property
    def n_bins(self):
        return int(self.counts.size)

    @property
    def delays_ps(self):
        return np.arange(-self.half_bins, self.half_bins + 1, dtype=np.int64) * self.bin_width_ps

    @property
    def bin_edges_ps(self):
        return (np.arange(-self.half_bins, self.half_bins + 2) - 0.5) * self.bin_width_ps

    @property
    def range_ps(self):
        edges = self.bin_edges_ps
        return float(edges[0]), float(edges[-1])

    @property
    def total(self):
        return int(self.counts.sum())

    def mirrored(self):
        """The histogram of the swapped channel pair."""
        return HistogramResult(self.bin_width_ps, self.half_bins, self.counts[::-1].copy(),
                               self.n_sig_events, self.n_ref_events)


def _histogram_geometry(bin_width_ps, range_ps):
    if int(bin_width_ps) != bin_width_ps or bin_width_ps < 1:
        raise ConfigError("bin width must be an integer >= 1 ps, got {!r}".format(bin_width_ps))
    bin_width_ps = int(bin_width_ps)
    half_bins = int(range_ps // bin_width_ps)
    if half_bins < 1:
        raise ConfigError("range +-{!r} ps spans fewer than 2 bins of {} ps".format(range_ps, bin_width_ps))
    # largest |d| that still rounds into bin +-half_bins
    span = (bin_width_ps * (2 * half_bins + 1) - 1) // 2
    return bin_width_ps, half_bins, span


def check_channels(stream, *wanted):
    for ch in wanted:
        if not 0 <= int(ch) < stream.channel_count:
            raise ConfigError("unknown channel {} (stream declares {} channels)".format(ch, stream.channel_count))


def as_int64_timestamps(timestamps):
    if timestamps.size and timestamps[-1] >= _INT64_LIMIT:
        raise TagFormatError("timestamps beyond 2**63 ps are not supported by the correlator")
    return timestamps.astype(np.int64)


class CoincidenceCounter:
    """Streaming all-pairs histogram over consecutive TagStream chunks.

    Tags closer than the histogram span to the end of a chunk are carried
    over, so any chunking gives the same counts as one pass.
    """

    def __init__(self, ch_ref, ch_sig, bin_width_ps, range_ps):
        self.ch_ref = int(ch_ref)
        self.ch_sig = int(ch_sig)
        self.bin_width_ps, self.half_bins, self.span_ps = _histogram_geometry(bin_width_ps, range_ps)
        self.counts = np.zeros(2 * self.half_bins + 1, dtype=np.uint64)
        self.n_ref_events = 0
        self.n_sig_events = 0
        self.n_tags = 0
        self._carry_ts = np.empty(0, dtype=np.int64)
        self._carry_ch = np.empty(0, dtype=np.uint8)

    def feed(self, chunk):
        check_channels(chunk, self.ch_ref, self.ch_sig)
        if not len(chunk):
            return self
        chunk.check_sorted()
        timestamps = as_int64_timestamps(chunk.timestamps)
        if self._carry_ts.size and timestamps[0] < self._carry_ts[-1]:
            raise TagFormatError("timestamp inversion at record {}".format(self.n_tags), record_index=self.n_tags)
        combined_ts = np.concatenate((self._carry_ts, timestamps))
        combined_ch = np.concatenate((self._carry_ch, chunk.channels))
        _sweep_pairs(combined_ts, combined_ch, 0, self._carry_ts.size, combined_ts.size,
                     self.ch_ref, self.ch_sig, self.bin_width_ps, self.half_bins, self.span_ps, self.counts)

        self.n_ref_events += int(np.count_nonzero(chunk.channels == self.ch_ref))
        self.n_sig_events += int(np.count_nonzero(chunk.channels == self.ch_sig))
        self.n_tags += len(chunk)
        keep_from = int(np.searchsorted(combined_ts, combined_ts[-1] - self.span_ps, side="left"))
        self._carry_ts = combined_ts[keep_from:].copy()
        self._carry_ch = combined_ch[keep_from:].copy()
        return self

    def result(self):
        return HistogramResult(self.bin_width_ps, self.half_bins, self.counts.copy(),
                               self.n_ref_events, self.n_sig_events)


def _histogram_in_memory(stream, ch_ref, ch_sig, bin_width_ps, half_bins, span, workers):
    timestamps = as_int64_timestamps(stream.timestamps)
    channels = stream.channels
    n_tags = timestamps.size
    bounds = np.linspace(0, n_tags, max(1, int(workers)) + 1).astype(np.int64)

    def run_block(block):
        start, stop = int(bounds[block]), int(bounds[block + 1])
        counts = np.zeros(2 * half_bins + 1, dtype=np.uint64)
        if stop > start:
            left = int(np.searchsorted(timestamps, timestamps[start] - span, side="left"))
            _sweep_pairs(timestamps, channels, left, start, stop, ch_ref, ch_sig, bin_width_ps, half_bins, span, counts)
        return counts

    if bounds.size == 2:
        return run_block(0)
    with ThreadPoolExecutor(max_workers=bounds.size - 1) as pool:
        partial = list(pool.map(run_block, range(bounds.size - 1)))
    return np.sum(partial, axis=0, dtype=np.uint64)


def coincidence_histogram(tags, ch_ref, ch_sig, bin_width_ps, range_ps, workers=1):
    """Histogram of t_sig - t_ref over all tag pairs within +-range_ps.

    Args:
        tags (TagStream | Iterable[TagStream]): A sorted stream, or its
            consecutive chunks (e.g. from ``iter_tag_chunks``).
        ch_ref (int): Reference (start) channel.
        ch_sig (int): Signal channel; may equal ``ch_ref`` for an autocorrelation.
        bin_width_ps (int): Bin width, >= 1 ps.
        range_ps (int): Half range; the histogram has 2*(range_ps // bin_width_ps) + 1 bins.
        workers (int): Threads for an in-memory stream; the merge is an
            integer sum so the result does not depend on the split.

    Returns:
        HistogramResult
    """
    bin_width_ps, half_bins, span = _histogram_geometry(bin_width_ps, range_ps)
    if not isinstance(tags, TagStream):
        counter = CoincidenceCounter(ch_ref, ch_sig, bin_width_ps, range_ps)
        for chunk in tags:
            counter.feed(chunk)
        result = counter.result()
    else:
        check_channels(tags, ch_ref, ch_sig)
        tags.check_sorted()
        counts = _histogram_in_memory(tags, int(ch_ref), int(ch_sig), bin_width_ps, half_bins, span, workers)
        result = HistogramResult(bin_width_ps, half_bins, counts,
                                 int(np.count_nonzero(tags.channels == ch_ref)),
                                 int(np.count_nonzero(tags.channels == ch_sig)))
    logger.info("Histogram ch%d->ch%d: %d bins of %d ps, %d coincidences, %d reference tags.",
                ch_ref, ch_sig, result.n_bins, bin_width_ps, result.total, result.n_ref_events)
    return result


def window_coincidences(tags, ch_ref, ch_sig, window_ps):
    """Number of (ref, sig) pairs with |t_sig - t_ref| <= window_ps // 2."""
    check_channels(tags, ch_ref, ch_sig)
    if window_ps < 0:
        raise ConfigError("window must be >= 0 ps")
    half = int(window_ps) // 2
    ref = as_int64_timestamps(tags.channel(ch_ref))
    sig = as_int64_timestamps(tags.channel(ch_sig))
    lo = np.searchsorted(sig, ref - half, side="left")
    hi = np.searchsorted(sig, ref + half, side="right")
    return int(np.sum(hi - lo))


def accidental_counts_per_bin(n_ref, n_sig, duration_ps, bin_width_ps):
    """Expected all-pairs counts per bin for independent Poisson channels."""
    if duration_ps <= 0:
        raise ConfigError("duration must be positive")
    return n_ref * n_sig / duration_ps * bin_width_ps


def histogram_export(result, sink):
    """Write ``delay_ps,counts`` rows, one per bin."""
    if hasattr(sink, "write"):
        _write_histogram_rows(result, sink)
        return
    with open(sink, "w", newline="", encoding="utf-8") as handle:
        _write_histogram_rows(result, handle)


def _write_histogram_rows(result, handle):
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(["delay_ps", "counts"])
    for delay, count in zip(result.delays_ps.tolist(), result.counts.tolist()):
        writer.writerow([delay, count])


def read_histogram_csv(source):
    """Read an exported histogram back.

    Returns:
        tuple: (delays_ps int64 array, counts uint64 array)
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        try:
            with open(source, newline="", encoding="utf-8") as handle:
                text = handle.read()
        except OSError as e:
            raise TagFormatError("cannot read histogram CSV {}: {}".format(source, e.strerror or e)) from e
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["delay_ps", "counts"]:
        raise TagFormatError("histogram CSV must start with 'delay_ps,counts'")
    try:
        delays = np.array([int(r[0]) for r in rows[1:]], dtype=np.int64)
        counts = np.array([int(r[1]) for r in rows[1:]], dtype=np.uint64)
    except (ValueError, IndexError) as e:
        raise TagFormatError("malformed histogram row: {}".format(e))
    return delays, counts
