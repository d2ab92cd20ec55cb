"""Return Link Encapsulation adaptation.

Packs queued TCP segments into fixed-size burst payloads (whole segments,
fragments, or several small segments per burst) and maps a lost burst back
to the set of transport segments it carried.  Byte amounts are kept as
floats because the effective burst payload is calibrated in fractional
segment units (see config.DEFAULT_RLE_PAYLOAD).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

__all__ = ["SegmentRef", "BurstSlice", "TxQueue", "pack_next_burst", "on_burst_lost"]

_EPS = 1e-9


@dataclass
class SegmentRef:
    """One TCP segment incarnation as seen by the MAC queue."""

    flow_id: int
    seg_seq: int
    bytes_total: float          # MSS + per-segment overhead
    tx_epoch: int = 0           # bumped on every retransmission


@dataclass
class BurstSlice:
    """A (possibly partial) segment's share of one burst payload."""

    seg: SegmentRef
    bytes_in_burst: float
    is_final_fragment: bool


@dataclass
class TxQueue:
    """Per-RCST FIFO of segments awaiting MAC transmission."""

    flow_id: int
    capacity_segments: int = 10000
    pending: deque = field(default_factory=deque)
    cursor_seg: SegmentRef | None = None   # in-progress fragmented segment
    cursor_sent: float = 0.0
    overflow_drops: int = 0

    def __len__(self):
        return len(self.pending) + (1 if self.cursor_seg is not None else 0)

    def has_data(self) -> bool:
        return self.cursor_seg is not None or bool(self.pending)

    def push(self, seg: SegmentRef) -> bool:
        """Append a segment; tail-drops (and counts) on overflow."""
        if len(self.pending) >= self.capacity_segments:
            self.overflow_drops += 1
            return False
        self.pending.append(seg)
        return True

    def push_front(self, seg: SegmentRef):
        """Queue a retransmission ahead of new data."""
        self.pending.appendleft(seg)

    def remove(self, seg_seq: int) -> bool:
        """Drop a queued (untransmitted) copy of seg_seq, wherever it sits."""
        if self.cursor_seg is not None and self.cursor_seg.seg_seq == seg_seq:
            self.cursor_seg = None
            self.cursor_sent = 0.0
            return True
        for seg in self.pending:
            if seg.seg_seq == seg_seq:
                self.pending.remove(seg)
                return True
        return False

    def queued_seqs(self):
        if self.cursor_seg is not None:
            yield self.cursor_seg.seg_seq
        for seg in self.pending:
            yield seg.seg_seq


def pack_next_burst(q: TxQueue, payload_bytes: float,
                    max_distinct: int | None = None) -> list[BurstSlice] | None:
    """Greedily fill one burst payload from the queue.

    Resumes any in-progress fragment first, then takes whole or partial
    segments in FIFO order until the payload is exhausted, the queue
    empties, or ``max_distinct`` distinct segments have been touched.
    Returns None when there is nothing to send.
    """
    if not q.has_data():
        return None
    budget = payload_bytes
    slices: list[BurstSlice] = []

    if q.cursor_seg is not None:
        seg = q.cursor_seg
        remaining = seg.bytes_total - q.cursor_sent
        take = min(remaining, budget)
        final = take >= remaining - _EPS
        slices.append(BurstSlice(seg, take, final))
        budget -= take
        if final:
            q.cursor_seg = None
            q.cursor_sent = 0.0
        else:
            q.cursor_sent += take

    while q.pending and budget > _EPS:
        if max_distinct is not None and len(slices) >= max_distinct:
            break
        seg = q.pending[0]
        take = min(seg.bytes_total, budget)
        final = take >= seg.bytes_total - _EPS
        slices.append(BurstSlice(seg, take, final))
        budget -= take
        q.pending.popleft()
        if not final:
            q.cursor_seg = seg
            q.cursor_sent = take
            break

    return slices


def on_burst_lost(slices: list[BurstSlice]) -> set[int]:
    """Segments lost in full when the carrying burst collides.

    Any slice in a lost burst kills its whole segment; the distinct
    seg_seq set is returned for transport-layer bookkeeping.
    """
    return {sl.seg.seg_seq for sl in slices}
