"""CRDSA++ random-access MAC: replica placement and iterative SIC decoding.

A burst is one time-slot's payload; each unique burst is transmitted as
``replicas`` identical copies placed uniformly at random (without
replacement) in one RA block.  Decoding peels singleton slots and cancels
the decoded burst's replicas everywhere, assuming power-balanced terminals
(perfect cancellation, no capture).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Burst",
    "RaBlock",
    "MacStats",
    "MacUsageError",
    "place_burst",
    "decode_block",
    "sic_decode",
    "sample_replica_slots",
    "run_open_loop",
    "slotted_aloha_blr",
    "DEFAULT_MAX_ITERS",
]

DEFAULT_MAX_ITERS = 20


class MacUsageError(RuntimeError):
    """Raised on out-of-order MAC operations (e.g. placing into a sealed block)."""


@dataclass
class Burst:
    rcst_id: int
    burst_seq: int
    payload: object = None           # opaque to the MAC (list of RLE slices)
    replica_slots: tuple = ()


@dataclass
class RaBlock:
    block_index: int
    n_slots: int
    slots: list = field(default_factory=list)   # per-slot occupancy lists
    bursts: list = field(default_factory=list)  # unique bursts, placement order
    sealed: bool = False

    def __post_init__(self):
        if not self.slots:
            self.slots = [[] for _ in range(self.n_slots)]

    @property
    def unique_burst_count(self) -> int:
        return len(self.bursts)

    @property
    def offered_load(self) -> float:
        return self.unique_burst_count / self.n_slots


def sample_replica_slots(rng: np.random.Generator, m: int, n_slots: int,
                         replicas: int) -> np.ndarray:
    """Distinct replica slots for m bursts, shape (m, replicas).

    Rejection-resamples rows containing duplicate slots; with the block
    sizes in use here the duplicate probability per row is a few percent,
    so this converges immediately while staying fully deterministic.
    """
    if replicas > n_slots:
        raise MacUsageError("replicas cannot exceed slots per block")
    out = rng.integers(0, n_slots, size=(m, replicas), dtype=np.int64)
    if replicas == 1:
        return out
    while True:
        srt = np.sort(out, axis=1)
        bad = (srt[:, 1:] == srt[:, :-1]).any(axis=1)
        if not bad.any():
            return out
        out[bad] = rng.integers(0, n_slots, size=(int(bad.sum()), replicas),
                                dtype=np.int64)


def place_burst(block: RaBlock, burst: Burst, rng: np.random.Generator,
                replicas: int) -> RaBlock:
    """Draw replica slots for one burst and append it to the block."""
    if block.sealed:
        raise MacUsageError("cannot place a burst into a sealed block")
    if burst.replica_slots:
        raise MacUsageError("burst already has assigned slots")
    slots = sample_replica_slots(rng, 1, block.n_slots, replicas)[0]
    burst.replica_slots = tuple(int(s) for s in slots)
    idx = len(block.bursts)
    block.bursts.append(burst)
    for s in burst.replica_slots:
        block.slots[s].append(idx)
    return block


def sic_decode(replica_slots: list, max_iters: int = DEFAULT_MAX_ITERS):
    """Iterative SIC over one block given each burst's replica slots.

    Returns (decoded, lost) as sets of burst indices.  One iteration
    decodes every currently-singleton slot and removes the decoded
    bursts' replicas; the fixed point is independent of slot visiting
    order, so a worklist is used instead of full passes.
    """
    counts = {}
    occ = {}
    for i, slots in enumerate(replica_slots):
        for s in slots:
            counts[s] = counts.get(s, 0) + 1
            occ.setdefault(s, []).append(i)

    n_bursts = len(replica_slots)
    alive = [True] * n_bursts
    decoded = set()

    frontier = [s for s, c in counts.items() if c == 1]
    iters = 0
    while frontier and iters < max_iters:
        iters += 1
        next_frontier = []
        for s in frontier:
            if counts[s] != 1:
                continue
            b = next(i for i in occ[s] if alive[i])
            alive[b] = False
            decoded.add(b)
            for rs in replica_slots[b]:
                counts[rs] -= 1
                if counts[rs] == 1:
                    next_frontier.append(rs)
        frontier = next_frontier

    lost = set(range(n_bursts)) - decoded
    return decoded, lost


def decode_block(block: RaBlock, max_iters: int = DEFAULT_MAX_ITERS):
    """SIC-decode a sealed block; see :func:`sic_decode`."""
    block.sealed = True
    return sic_decode([b.replica_slots for b in block.bursts], max_iters)


@dataclass
class MacStats:
    """Open-loop MAC statistics over a batch of RA blocks."""

    n_blocks: int
    n_rcst: int
    slots_per_block: int
    bursts_offered: int
    bursts_decoded: int
    g_series: np.ndarray            # per-block normalized offered load
    offered_series: np.ndarray = None   # per-block unique burst counts
    decoded_series: np.ndarray = None

    @property
    def bursts_lost(self) -> int:
        return self.bursts_offered - self.bursts_decoded

    @property
    def blr(self) -> float:
        if self.bursts_offered == 0:
            return 0.0              # zero-sample case, see bursts_offered
        return self.bursts_lost / self.bursts_offered

    @property
    def g_mean(self) -> float:
        return float(self.g_series.mean()) if self.n_blocks else 0.0

    @property
    def load_per_rcst(self) -> float:
        return self.g_mean / self.n_rcst

    @property
    def throughput_per_slot(self) -> float:
        """Decoded unique bursts per time-slot (normalized MAC throughput)."""
        total_slots = self.n_blocks * self.slots_per_block
        return self.bursts_decoded / total_slots if total_slots else 0.0


def _decode_batch(block_of_burst: np.ndarray, slot_matrix: np.ndarray,
                  n_blocks: int, n_slots: int,
                  max_iters: int = DEFAULT_MAX_ITERS) -> np.ndarray:
    """Vectorized SIC over many independent blocks at once.

    ``block_of_burst[i]`` is the block owning burst i and ``slot_matrix[i]``
    its replica slots.  Returns a boolean decoded mask.  Semantically
    identical to running :func:`decode_block` per block (each global pass
    decodes at least everything a per-block pass would).
    """
    m = block_of_burst.shape[0]
    decoded = np.zeros(m, dtype=bool)
    if m == 0:
        return decoded
    keys = block_of_burst[:, None] * n_slots + slot_matrix  # (m, replicas)
    alive = np.ones(m, dtype=bool)
    total = n_blocks * n_slots
    for _ in range(max_iters):
        counts = np.bincount(keys[alive].ravel(), minlength=total)
        newly = alive & (counts[keys] == 1).any(axis=1)
        if not newly.any():
            break
        decoded |= newly
        alive &= ~newly
    return decoded


def run_open_loop(cfg, tx_prob: float, blocks: int,
                  max_iters: int = DEFAULT_MAX_ITERS,
                  chunk_blocks: int = 4096) -> MacStats:
    """TCP-disabled load sweep driver: every RCST offers one burst per
    block with probability ``tx_prob``; placement and SIC follow the
    closed-loop MAC exactly.

    Transmit decisions come from each RCST's private stream and slot
    placement from the MAC stream, mirroring the closed-loop stream layout.
    """
    from crdsasim.config import MAC_STREAM, make_rng, rcst_stream

    if not 0.0 <= tx_prob <= 1.0:
        raise ValueError("tx_prob must lie in [0, 1]")
    n = cfg.slots_per_block
    n_rcst = cfg.n_rcst
    mac_rng = make_rng(cfg.seed, MAC_STREAM)
    rcst_rngs = [make_rng(cfg.seed, rcst_stream(i)) for i in range(n_rcst)]

    offered_series = np.zeros(blocks, dtype=np.int64)
    decoded_series = np.zeros(blocks, dtype=np.int64)

    done = 0
    while done < blocks:
        nb = min(chunk_blocks, blocks - done)
        # (n_rcst, nb) transmit decisions, one row per private stream
        tx = np.empty((n_rcst, nb), dtype=bool)
        for i, rng in enumerate(rcst_rngs):
            tx[i] = rng.random(nb) < tx_prob
        offered_series[done:done + nb] = tx.sum(axis=0)

        rcst_idx, block_idx = np.nonzero(tx)          # burst per (rcst, block)
        m = rcst_idx.shape[0]
        if m:
            order = np.argsort(block_idx, kind="stable")
            block_idx = block_idx[order]
            slots = sample_replica_slots(mac_rng, m, n, cfg.replicas)
            dec = _decode_batch(block_idx, slots, nb, n, max_iters)
            decoded_series[done:done + nb] = np.bincount(
                block_idx[dec], minlength=nb
            )
        done += nb

    return MacStats(
        n_blocks=blocks,
        n_rcst=n_rcst,
        slots_per_block=n,
        bursts_offered=int(offered_series.sum()),
        bursts_decoded=int(decoded_series.sum()),
        g_series=offered_series / n,
        offered_series=offered_series,
        decoded_series=decoded_series,
    )


def slotted_aloha_blr(n_slots: int, n_rcst: int, tx_prob: float) -> float:
    """Closed-form replicas=1 oracle: per-burst loss probability.

    With K ~ 1 + Binomial(N-1, t) transmitters in a block of n slots,
    E[1 - (1 - 1/n)^(K-1)] collapses to 1 - (1 - t/n)^(N-1).
    """
    return 1.0 - (1.0 - tx_prob / n_slots) ** (n_rcst - 1)
