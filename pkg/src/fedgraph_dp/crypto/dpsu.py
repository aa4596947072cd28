"""Differentially private set union over the edge domain.

The clients form a chain ``C_1 -> C_2 -> ... -> C_m -> server`` and pass
one encrypted flag vector (one ciphertext per node pair) down it.

* ``C_1`` applies randomized response to its own membership bits and
  encrypts every slot.
* Each later client walks every slot. For a pair it owns, it overwrites
  the slot with a fresh encryption of ``RR(1)``. For any other pair the
  behavior depends on ``mode``:

  - ``single-flip``: rerandomize only, so a pair outside the union keeps
    the one flip applied by ``C_1``.
  - ``literal-alg3``: draw ``RR(0)``; on 1 the slot becomes ``Enc(1)``,
    otherwise it is rerandomized. Zeros then get up to ``m`` chances to
    flip.

  In both modes every slot is touched with fresh randomness, so the
  ciphertexts do not reveal which slots a client owns.
* All clients contribute partial decryptions, and the server keeps the
  slots that decrypt to 1.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from ..graph import Graph, SubgraphCollection, domain_size
from ..mechanisms import BudgetLedger, RRChannel, rr_flip
from .elgamal import (
    BitCiphertext,
    combine_many,
    decode_ciphertexts,
    encode_ciphertexts,
    keygen,
    partial_decrypt_many,
)
from .groups import GroupBackend, get_group

__all__ = [
    "DPSU_MODES",
    "DPSUTrace",
    "InProcessChannel",
    "Transport",
    "WireChannel",
    "dpsu_collect_graph",
]

DPSU_MODES = ("single-flip", "literal-alg3")


class Transport(Protocol):
    def send(self, dst: str, payload: list[BitCiphertext]) -> None: ...

    def recv(self, dst: str) -> list[BitCiphertext]: ...


class InProcessChannel:
    """FIFO mailbox per destination; messages are delivered in send order."""

    def __init__(self):
        self._boxes: dict[str, deque] = {}
        self.log: list[tuple[str, int]] = []

    def send(self, dst: str, payload):
        self._boxes.setdefault(dst, deque()).append(payload)
        self.log.append((dst, len(payload)))

    def recv(self, dst: str):
        box = self._boxes.get(dst)
        if not box:
            raise LookupError(f"no message waiting for {dst}")
        return box.popleft()


class WireChannel(InProcessChannel):
    """Same as :class:`InProcessChannel` but every message crosses as bytes."""

    def __init__(self, group: GroupBackend):
        super().__init__()
        self.group = group
        self.bytes_sent = 0

    def send(self, dst: str, payload):
        data = encode_ciphertexts(payload, self.group)
        self.bytes_sent += len(data)
        self._boxes.setdefault(dst, deque()).append(data)
        self.log.append((dst, len(payload)))

    def recv(self, dst: str):
        return decode_ciphertexts(super().recv(dst), self.group)


@dataclass
class DPSUTrace:
    """Per-slot instrumentation filled in by :func:`dpsu_collect_graph`.

    ``influencing[j]`` counts the RR draws the final plaintext of slot
    ``j`` is a function of; ``draws[j]`` counts all RR draws made for it.
    """

    influencing: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    draws: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    client_order: list[int] = field(default_factory=list)


def dpsu_collect_graph(
    parts: SubgraphCollection | Sequence[Graph],
    epsilon: float,
    mode: str = "single-flip",
    rng: np.random.Generator | None = None,
    group: GroupBackend | str | None = None,
    channel: Transport | None = None,
    ledger: BudgetLedger | None = None,
    trace: DPSUTrace | None = None,
    secure_scalars: bool = False,
) -> Graph:
    """Run one collection pass and return the noisy union ``G'``.

    ``epsilon=inf`` disables randomized response, so the output is the
    exact union. ``secure_scalars`` draws encryption randomness from the
    OS instead of ``rng``. Results then stay reproducible, since
    ciphertext randomness never affects plaintexts.
    """
    if mode not in DPSU_MODES:
        raise ValueError(f"mode must be one of {DPSU_MODES}, got {mode!r}")
    parts = list(parts)
    if not parts:
        raise ValueError("need at least one client")
    n = parts[0].n
    if any(g.n != n for g in parts):
        raise ValueError("all clients must share one node universe")
    ch = RRChannel(epsilon)
    if isinstance(group, str) or group is None:
        group = get_group(group) if group else get_group()
    if rng is None:
        rng = np.random.default_rng()
    if channel is None:
        channel = InProcessChannel()
    m = len(parts)
    N = domain_size(n)
    client_rngs = rng.spawn(m + 1)
    scalar_rng = (lambda i: None) if secure_scalars else (lambda i: client_rngs[i])

    if ledger is not None:
        ledger.record("collect", "dpsu-rr", epsilon, party="clients")

    shares, pk = keygen(m, group, scalar_rng(m))
    exp, exp_g, mul, g, h = group.exp, group.exp_g, group.mul, group.generator, pk.pk

    influencing = np.zeros(N, dtype=np.int64)
    draws = np.zeros(N, dtype=np.int64)

    # client 1: RR on every slot of its own flag vector
    y = rr_flip(parts[0].flags, ch, client_rngs[0])
    draws += 1
    influencing[:] = 1
    rs = group.random_scalars(scalar_rng(0), N)
    vec = []
    for b, r in zip(y.tolist(), rs):
        c2 = exp(h, r)
        vec.append(BitCiphertext(exp_g(r), mul(c2, g) if b else c2))
    channel.send("client-1", vec)

    for i in range(1, m):
        vec = channel.recv(f"client-{i}")
        if len(vec) != N:
            raise ValueError(f"client {i + 1} received {len(vec)} slots, expected {N}")
        owned = parts[i].flags
        crng = client_rngs[i]
        if mode == "single-flip":
            # owned slots get a fresh RR(1); the rest are only rerandomized
            fresh = np.zeros(N, dtype=bool)
            fresh[owned] = rr_flip(np.ones(int(owned.sum()), dtype=bool), ch, crng)
            replace = owned
            draws += owned
            influencing[owned] = 1
        else:
            fresh = rr_flip(owned, ch, crng)
            # owned: RR(1)==1 -> Enc(1), else keep. non-owned: RR(0)==1 -> Enc(1), else keep.
            replace = fresh
            draws += 1
            influencing += 1
        ss = group.random_scalars(scalar_rng(i), N)
        out = []
        for (c1, c2), rep, bit, s in zip(vec, replace.tolist(), fresh.tolist(), ss):
            if rep:
                e = exp(h, s)
                out.append(BitCiphertext(exp_g(s), mul(e, g) if bit else e))
            else:
                out.append(BitCiphertext(mul(c1, exp_g(s)), mul(c2, exp(h, s))))
        channel.send(f"client-{i + 1}", out)

    final = channel.recv(f"client-{m}")
    if len(final) != N:
        raise ValueError(f"server received {len(final)} slots, expected {N}")
    partials = {s.index: partial_decrypt_many(final, s, group) for s in shares}
    bits = combine_many(final, partials, group, m)

    if trace is not None:
        trace.influencing = influencing
        trace.draws = draws
        trace.client_order = list(range(m))
    return Graph.from_flags(n, bits)
