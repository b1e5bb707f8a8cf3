"""Message-passing execution of the adaptive verification protocol.

Three actors exchange frames over an ordered channel:

* ``Referee`` -- schedules rounds (direction and setting draws), holds the
  joint two-qubit state and answers measurement requests with correctly
  correlated outcomes.  Parties never see the state.
* ``Party("A")`` / ``Party("B")`` -- Alice and Bob.  In each round one of
  them leads (measures a Pauli basis and feeds the outcome forward) and the
  other follows (tests the conditional projector selected by that outcome).

Wire format
-----------
Every frame is 6 bytes: ``<B I B`` little-endian, i.e. a 1-byte tag, a
4-byte unsigned index and a 1-byte payload.

====  ===============  ======================  =================================
tag   frame            index                   payload
====  ===============  ======================  =================================
0x01  ROUND_START      round                   ``leader << 4 | setting``
0x02  MEASURE_REQUEST  round                   ``party << 7 | projector id``
0x03  MEASURE_RESULT   round                   ``party << 7 | outcome``
0x04  FEED_FORWARD     round                   outcome
0x05  VERDICT          round                   1 accept, 0 reject
0x06  SESSION_END      number of accepts       0
====  ===============  ======================  =================================

``party``/``leader`` is 0 for Alice and 1 for Bob.  Projector ids are listed
in :data:`PROJECTOR_IDS`.  A leader's request names the outcome-1 ket of its
Pauli basis (``+``, ``R`` or ``H``); the outcome is 1 when that ket is found.
A follower's request names the projector to test; outcome 1 means pass.
"""

from __future__ import annotations

import enum
import io
import json
import socket
import struct
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import quantum as q
from .simulator import PROB_GUARD, TrialConfig, TrialRecord, apply_noise, trial_rng
from .strategies import Strategy, build_bi_locc, build_uni_locc, setting_index

FRAME = struct.Struct("<BIB")
PARTIES = ("A", "B")

PROJECTOR_IDS = {
    "H": 0, "V": 1, "+": 2, "-": 3, "R": 4, "L": 5,
    "u+": 6, "u-": 7, "w+": 8, "w-": 9,
    "~u+": 10, "~u-": 11, "~w+": 12, "~w-": 13,
}
PROJECTOR_NAMES = {v: k for k, v in PROJECTOR_IDS.items()}
BASIS_PARTNER = {"+": "-", "R": "L", "H": "V"}


class FrameType(enum.IntEnum):
    ROUND_START = 1
    MEASURE_REQUEST = 2
    MEASURE_RESULT = 3
    FEED_FORWARD = 4
    VERDICT = 5
    SESSION_END = 6


ROUND_GRAMMAR = (
    FrameType.ROUND_START,
    FrameType.MEASURE_REQUEST,
    FrameType.MEASURE_RESULT,
    FrameType.FEED_FORWARD,
    FrameType.MEASURE_REQUEST,
    FrameType.MEASURE_RESULT,
    FrameType.VERDICT,
)


class ProtocolError(RuntimeError):
    def __init__(self, round_index: int, message: str):
        super().__init__(f"round {round_index}: {message}")
        self.round_index = round_index


class ChannelClosed(ConnectionError):
    pass


@dataclass(frozen=True)
class Message:
    kind: FrameType
    index: int
    payload: int = 0

    @classmethod
    def round_start(cls, r: int, leader: str, setting: int) -> "Message":
        return cls(FrameType.ROUND_START, r, PARTIES.index(leader) << 4 | setting)

    @classmethod
    def request(cls, r: int, party: str, projector: str) -> "Message":
        return cls(FrameType.MEASURE_REQUEST, r, PARTIES.index(party) << 7 | PROJECTOR_IDS[projector])

    @classmethod
    def result(cls, r: int, party: str, outcome: int) -> "Message":
        return cls(FrameType.MEASURE_RESULT, r, PARTIES.index(party) << 7 | outcome)

    @classmethod
    def feed_forward(cls, r: int, outcome: int) -> "Message":
        return cls(FrameType.FEED_FORWARD, r, outcome)

    @classmethod
    def verdict(cls, r: int, accept: bool) -> "Message":
        return cls(FrameType.VERDICT, r, int(accept))

    @classmethod
    def session_end(cls, accepts: int) -> "Message":
        return cls(FrameType.SESSION_END, accepts, 0)

    @property
    def party(self) -> str:
        return PARTIES[self.payload >> 7]

    @property
    def leader(self) -> str:
        return PARTIES[self.payload >> 4]

    @property
    def setting(self) -> int:
        return self.payload & 0x0F

    @property
    def projector(self) -> str:
        return PROJECTOR_NAMES[self.payload & 0x7F]

    @property
    def outcome(self) -> int:
        return self.payload & 0x01

    def encode(self) -> bytes:
        return FRAME.pack(int(self.kind), self.index, self.payload)

    @classmethod
    def decode(cls, data: bytes, round_hint: int = -1) -> "Message":
        if len(data) != FRAME.size:
            raise ProtocolError(round_hint, f"frame of {len(data)} bytes, expected {FRAME.size}")
        tag, index, payload = FRAME.unpack(data)
        try:
            kind = FrameType(tag)
        except ValueError:
            raise ProtocolError(round_hint, f"unknown frame tag 0x{tag:02x}") from None
        msg = cls(kind, index, payload)
        if kind == FrameType.MEASURE_REQUEST and (payload & 0x7F) not in PROJECTOR_NAMES:
            raise ProtocolError(index, f"unknown projector id {payload & 0x7F}")
        if kind == FrameType.ROUND_START and (payload >> 4 > 1 or payload & 0x0F > 2):
            raise ProtocolError(index, f"bad ROUND_START payload 0x{payload:02x}")
        if kind in (FrameType.FEED_FORWARD, FrameType.VERDICT) and payload > 1:
            raise ProtocolError(index, f"bad {kind.name} payload {payload}")
        if kind == FrameType.MEASURE_RESULT and payload & 0x7E:
            raise ProtocolError(index, f"bad MEASURE_RESULT payload 0x{payload:02x}")
        return msg

    def describe(self) -> dict:
        k = self.kind
        if k == FrameType.ROUND_START:
            return {"leader": self.leader, "setting": self.setting}
        if k == FrameType.MEASURE_REQUEST:
            return {"party": self.party, "projector": self.projector}
        if k == FrameType.MEASURE_RESULT:
            return {"party": self.party, "outcome": self.outcome}
        if k == FrameType.FEED_FORWARD:
            return {"outcome": self.outcome}
        if k == FrameType.VERDICT:
            return {"accept": bool(self.payload)}
        return {"accepts": self.index}


# Channels -----------------------------------------------------------------


class Channel:
    """Ordered, reliable FIFO of frames.

    ``close_after`` simulates the link dropping after that many frames have
    been delivered.
    """

    def __init__(self, close_after: int | None = None):
        self.close_after = close_after
        self.delivered = 0

    def send(self, msg: Message) -> None:
        raise NotImplementedError

    def _recv(self) -> Message:
        raise NotImplementedError

    def recv(self) -> Message:
        if self.close_after is not None and self.delivered >= self.close_after:
            raise ChannelClosed(f"channel closed after {self.delivered} frames")
        msg = self._recv()
        self.delivered += 1
        return msg

    def pending(self) -> bool:
        raise NotImplementedError


class InMemoryChannel(Channel):
    def __init__(self, close_after: int | None = None):
        super().__init__(close_after)
        self._queue: deque[Message] = deque()

    def send(self, msg: Message) -> None:
        self._queue.append(msg)

    def _recv(self) -> Message:
        if not self._queue:
            raise ChannelClosed("channel drained")
        return self._queue.popleft()

    def pending(self) -> bool:
        return bool(self._queue)


class ByteStreamChannel(Channel):
    """Frames serialized onto a byte stream and parsed back.

    ``writer``/``reader`` are any binary file-like objects forming the two
    ends of one ordered stream; by default an in-process buffer is used.
    """

    def __init__(self, writer=None, reader=None, close_after: int | None = None):
        super().__init__(close_after)
        if writer is None and reader is None:
            buf = _Pipe()
            writer = reader = buf
        self.writer = writer
        self.reader = reader
        self._queued = 0
        self.last_round = -1

    @classmethod
    def socketpair(cls, close_after: int | None = None) -> "ByteStreamChannel":
        a, b = socket.socketpair()
        return cls(a.makefile("wb", buffering=0), b.makefile("rb", buffering=0), close_after)

    def send(self, msg: Message) -> None:
        self.writer.write(msg.encode())
        self._queued += 1

    def send_raw(self, data: bytes) -> None:
        """Inject raw bytes (used for malformed-frame fixtures)."""
        self.writer.write(data)
        self._queued += 1

    def _recv(self) -> Message:
        data = b""
        while len(data) < FRAME.size:
            chunk = self.reader.read(FRAME.size - len(data))
            if not chunk:
                if data:
                    raise ProtocolError(self.last_round, "truncated frame")
                raise ChannelClosed("byte stream ended")
            data += chunk
        self._queued -= 1
        msg = Message.decode(data, self.last_round)
        if msg.kind != FrameType.SESSION_END:
            self.last_round = msg.index
        return msg

    def pending(self) -> bool:
        return self._queued > 0

    def close(self) -> None:
        for f in {id(self.writer): self.writer, id(self.reader): self.reader}.values():
            if hasattr(f, "close"):
                f.close()


class _Pipe(io.RawIOBase):
    def __init__(self):
        self._buf = bytearray()

    def writable(self) -> bool:
        return True

    def readable(self) -> bool:
        return True

    def write(self, b) -> int:
        self._buf.extend(b)
        return len(b)

    def read(self, n: int = -1) -> bytes:
        n = len(self._buf) if n < 0 else min(n, len(self._buf))
        out = bytes(self._buf[:n])
        del self._buf[:n]
        return out


# Actors -------------------------------------------------------------------


def _settings_by_direction(theta: float) -> dict[str, Strategy]:
    return {"AB": build_uni_locc(theta, "AB"), "BA": build_uni_locc(theta, "BA")}


def feed_forward_table(theta: float = 60.0) -> dict[tuple[str, str, int], str]:
    """(direction, leader basis id, leader outcome) -> follower projector name."""
    table = {}
    for d, strat in _settings_by_direction(theta).items():
        for s in strat.settings:
            for a in (0, 1):
                table[(d, s.leader_names[1], a)] = s.follower_names[a]
    return table


class Party:
    """Alice or Bob: a strict per-round state machine.

    Phases: ``idle`` -> (leader) ``await_result`` -> ``await_verdict``; or
    (follower) ``await_ff`` -> ``await_result`` -> ``idle``.
    """

    def __init__(self, name: str, theta: float):
        self.name = name
        self.strategies = _settings_by_direction(theta)
        self.phase = "idle"
        self.round = -1
        self.role: str | None = None
        self.setting = None
        self.pending_outcome: int | None = None
        self.rounds = 0
        self.accepts = 0

    def _expect(self, msg: Message, *phases: str) -> None:
        if self.phase not in phases:
            raise ProtocolError(msg.index, f"{self.name} got {msg.kind.name} in phase {self.phase}")
        if msg.index != self.round:
            raise ProtocolError(msg.index, f"{self.name} expected round {self.round}, got {msg.index}")

    def handle(self, msg: Message) -> list[Message]:
        k = msg.kind
        if k == FrameType.ROUND_START:
            if self.phase != "idle":
                raise ProtocolError(msg.index, f"{self.name} got ROUND_START mid-round")
            if msg.index != self.round + 1:
                raise ProtocolError(msg.index, f"{self.name} expected round {self.round + 1}")
            self.round = msg.index
            direction = "AB" if msg.leader == "A" else "BA"
            self.setting = self.strategies[direction].settings[msg.setting]
            if msg.leader == self.name:
                self.role = "leader"
                self.phase = "await_result"
                return [Message.request(self.round, self.name, self.setting.leader_names[1])]
            self.role = "follower"
            self.phase = "await_ff"
            return []
        if k == FrameType.MEASURE_RESULT:
            self._expect(msg, "await_result")
            if msg.party != self.name:
                raise ProtocolError(msg.index, f"{self.name} received {msg.party}'s result")
            if self.role == "leader":
                self.pending_outcome = msg.outcome
                self.phase = "await_verdict"
                return [Message.feed_forward(self.round, msg.outcome)]
            self._close_round(bool(msg.outcome))
            return [Message.verdict(self.round, bool(msg.outcome))]
        if k == FrameType.FEED_FORWARD:
            self._expect(msg, "await_ff")
            self.pending_outcome = msg.outcome
            self.phase = "await_result"
            return [Message.request(self.round, self.name, self.setting.follower_names[msg.outcome])]
        if k == FrameType.VERDICT:
            self._expect(msg, "await_verdict")
            self._close_round(bool(msg.payload))
            return []
        raise ProtocolError(msg.index, f"{self.name} cannot handle {k.name}")

    def _close_round(self, accept: bool) -> None:
        self.rounds += 1
        self.accepts += int(accept)
        self.phase = "idle"
        self.role = None
        self.pending_outcome = None


class Referee:
    """Trusted holder of the joint state and of the session's random stream.

    Draw order per round: direction (two-way sessions only), setting,
    leader outcome, follower outcome -- one ``random()`` double each.
    """

    def __init__(self, theta: float, sigma: np.ndarray, rng: np.random.Generator, policy: str):
        self.theta = theta
        self.sigma = q.check_density(sigma)
        self.rng = rng
        self.policy = policy
        self.strategies = _settings_by_direction(theta)
        self.kets = _named_kets(theta)
        self.round = -1
        self.leader: str | None = None
        self.state: np.ndarray | None = None
        self.leader_outcome: int | None = None
        self.setting_index: int | None = None
        self._ops: dict[tuple[str, str], np.ndarray] = {}

    def start_round(self, r: int) -> Message:
        if self.policy == "bi":
            leader = "A" if self.rng.random() < 0.5 else "B"
        else:
            leader = "A" if self.policy == "AB" else "B"
        strat = self.strategies["AB" if leader == "A" else "BA"]
        self.round = r
        self.leader = leader
        self.setting_index = setting_index(strat, self.rng.random())
        self.state = self.sigma.copy()
        self.leader_outcome = None
        return Message.round_start(r, leader, self.setting_index)

    def _local(self, party: str, name: str) -> np.ndarray:
        """Projector onto ket ``name`` on ``party``'s qubit, identity on the other."""
        op = self._ops.get((party, name))
        if op is None:
            p = q.projector(self.kets[name])
            op = q.tensor(p, q.I2) if party == "A" else q.tensor(q.I2, p)
            self._ops[(party, name)] = op
        return op

    def handle(self, msg: Message) -> list[Message]:
        if msg.kind == FrameType.VERDICT:
            self.state = None
            return []
        if msg.kind != FrameType.MEASURE_REQUEST:
            raise ProtocolError(msg.index, f"referee cannot handle {msg.kind.name}")
        if msg.index != self.round or self.state is None:
            raise ProtocolError(msg.index, "measurement request outside an open round")
        name = msg.projector
        if msg.party == self.leader and self.leader_outcome is None:
            if name not in BASIS_PARTNER:
                raise ProtocolError(msg.index, f"leader requested non-Pauli projector {name}")
            names = {1: name, 0: BASIS_PARTNER[name]}
            p1 = q.expectation(self._local(msg.party, name), self.state)
            u = self.rng.random()
            a = 1 if u < p1 else 0
            if (a == 1 and p1 < PROB_GUARD) or (a == 0 and 1 - p1 < PROB_GUARD):
                a = 1 - a
            lead = self._local(msg.party, names[a])
            post = lead @ self.state @ lead
            self.state = post / np.trace(post).real
            self.leader_outcome = a
            return [Message.result(self.round, msg.party, a)]
        if msg.party != self.leader and self.leader_outcome is not None:
            p_pass = q.expectation(self._local(msg.party, name), self.state)
            outcome = int(self.rng.random() < p_pass)
            return [Message.result(self.round, msg.party, outcome)]
        raise ProtocolError(msg.index, f"unexpected request from {msg.party}")


def _named_kets(theta: float) -> dict[str, np.ndarray]:
    kets = {"H": q.H, "V": q.V, "+": q.PLUS, "-": q.MINUS, "R": q.R, "L": q.L}
    for strat in _settings_by_direction(theta).values():
        for s in strat.settings:
            kets.update(zip(s.follower_names, s.follower_kets))
    return kets


# Sessions -----------------------------------------------------------------


@dataclass
class SessionResult:
    record: TrialRecord
    transcript: list[dict]
    directions: list[str]
    aborted: bool = False
    error: str | None = None
    theta: float = 0.0
    policy: str = "AB"

    @property
    def rounds(self) -> int:
        return self.record.n

    @property
    def accepts(self) -> int:
        return self.record.m

    def setting_counts(self) -> Counter:
        """Completed rounds per (direction, setting index)."""
        tr = self.record.setting_trace
        return Counter(zip(self.directions, [] if tr is None else tr.tolist()))

    def summary(self) -> dict:
        rep = realized_operator(self.theta, self.setting_counts(), self.policy)
        return {
            "rounds": self.rounds,
            "accepts": self.accepts,
            "accept_frequency": self.accepts / self.rounds if self.rounds else None,
            "realized_lambda2": rep.implied_lambda2 if rep else None,
            "aborted": self.aborted,
        }


POLICIES = {"uni": "AB", "uni_ba": "BA", "bi": "bi"}


def _sender(msg: Message, leader: str | None) -> str:
    k = msg.kind
    if k in (FrameType.ROUND_START, FrameType.SESSION_END):
        return "referee"
    if k == FrameType.MEASURE_RESULT:
        return "referee"
    if k == FrameType.MEASURE_REQUEST:
        return msg.party
    follower = "B" if leader == "A" else "A"
    return leader if k == FrameType.FEED_FORWARD else follower


def log_entry(msg: Message, leader: str | None) -> dict:
    return {
        "round": msg.index if msg.kind != FrameType.SESSION_END else None,
        "frame": msg.kind.name,
        "party": _sender(msg, leader),
        "payload": msg.describe(),
    }


def run_session(
    config: TrialConfig,
    channel: Channel | None = None,
    trial_index: int = 0,
) -> SessionResult:
    """Run ``config.measurements_per_trial`` protocol rounds over ``channel``.

    ``config.strategy`` selects the direction policy: ``uni`` (Alice leads),
    ``uni_ba`` (Bob leads) or ``bi`` (leader drawn 1/2-1/2 every round; a
    demonstration of the two-way scheme, see :func:`realized_operator`).
    A channel closing mid-session aborts it with the completed rounds kept;
    malformed frames raise :class:`ProtocolError`.
    """
    if config.strategy not in POLICIES:
        raise ValueError(f"protocol sessions support uni, uni_ba and bi, not {config.strategy!r}")
    policy = POLICIES[config.strategy]
    channel = channel if channel is not None else InMemoryChannel()
    sigma = apply_noise(config.theta, config.noise)
    rng = trial_rng(config.master_seed, trial_index)
    referee = Referee(config.theta, sigma, rng, policy)
    parties = {p: Party(p, config.theta) for p in PARTIES}

    bits: list[int] = []
    settings: list[int] = []
    outcomes: list[int] = []
    directions: list[str] = []
    transcript: list[dict] = []
    aborted, error = False, None

    def route(msg: Message, leader: str) -> list:
        k = msg.kind
        if k == FrameType.ROUND_START:
            return [parties["A"], parties["B"]]
        if k == FrameType.MEASURE_REQUEST:
            return [referee]
        if k == FrameType.MEASURE_RESULT:
            return [parties[msg.party]]
        if k == FrameType.FEED_FORWARD:
            return [parties["B" if leader == "A" else "A"]]
        if k == FrameType.VERDICT:
            return [referee, parties[leader]]
        return []

    try:
        for r in range(config.measurements_per_trial):
            channel.send(referee.start_round(r))
            leader = referee.leader
            closed = False
            while not closed:
                msg = channel.recv()
                if msg.kind != FrameType.SESSION_END and msg.index != r:
                    raise ProtocolError(r, f"frame for round {msg.index} during round {r}")
                transcript.append(log_entry(msg, leader))
                for actor in route(msg, leader):
                    for out in actor.handle(msg):
                        channel.send(out)
                if msg.kind == FrameType.VERDICT:
                    closed = True
                    bits.append(msg.payload)
                    settings.append(referee.setting_index)
                    outcomes.append(referee.leader_outcome)
                    directions.append("AB" if leader == "A" else "BA")
            if channel.pending():
                raise ProtocolError(r, "unconsumed frames after VERDICT")
        channel.send(Message.session_end(sum(bits)))
        end = channel.recv()
        if end.kind != FrameType.SESSION_END:
            raise ProtocolError(len(bits), f"expected SESSION_END, got {end.kind.name}")
        transcript.append(log_entry(end, None))
    except ChannelClosed as exc:
        aborted, error = True, f"round {len(bits)}: {exc}"

    record = TrialRecord(
        bits=np.array(bits, dtype=np.uint8),
        master_seed=config.master_seed,
        trial_index=trial_index,
        setting_trace=np.array(settings, dtype=np.int8),
        leader_outcomes=np.array(outcomes, dtype=np.int8),
        strategy=config.strategy,
        theta=config.theta,
    )
    return SessionResult(record, transcript, directions, aborted, error, config.theta, policy)


# Transcript validation ----------------------------------------------------


@dataclass(frozen=True)
class Violation:
    round: int | None
    kind: str
    message: str

    def __str__(self) -> str:
        where = "session" if self.round is None else f"round {self.round}"
        return f"{where}: [{self.kind}] {self.message}"


def _group_rounds(log: Sequence[dict]) -> tuple[list[list[dict]], list[dict], list[Violation]]:
    rounds: list[list[dict]] = []
    tail: list[dict] = []
    stray: list[Violation] = []
    for e in log:
        frame = e.get("frame")
        if frame == "SESSION_END":
            tail.append(e)
        elif frame == "ROUND_START":
            rounds.append([e])
        elif rounds:
            rounds[-1].append(e)
        else:
            stray.append(Violation(e.get("round"), "grammar", f"{frame} before any ROUND_START"))
    return rounds, tail, stray


def validate_transcript(
    log: Iterable[dict], record: TrialRecord | None = None, theta: float = 60.0
) -> list[Violation]:
    """Check a transcript log; returns the list of violations (empty if clean).

    Checks the per-round frame grammar, that the follower's projector is the
    one prescribed for the leader's setting and outcome, that forwarded and
    reported outcomes agree, and that counts match ``record`` and the
    SESSION_END frame.
    """
    log = list(log)
    table = feed_forward_table(theta)
    pauli = {d: [s.leader_names[1] for s in st.settings] for d, st in _settings_by_direction(theta).items()}
    rounds, tail, violations = _group_rounds(log)
    verdicts: list[int] = []

    for i, frames in enumerate(rounds):
        r = frames[0].get("round")
        kinds = [f.get("frame") for f in frames]
        expected = [k.name for k in ROUND_GRAMMAR]
        # a malformed round still counts its verdict so the counters stay comparable
        ends = [f["payload"].get("accept") for f in frames if f.get("frame") == "VERDICT"]
        salvage = [int(bool(ends[0]))] if len(ends) == 1 else []
        if r != i:
            violations.append(Violation(r, "grammar", f"round index {r}, expected {i}"))
            verdicts += salvage
            continue
        if any(f.get("round") != r for f in frames):
            violations.append(Violation(r, "grammar", "frame carries another round's index"))
            verdicts += salvage
            continue
        if kinds != expected:
            if i == len(rounds) - 1 and kinds == expected[: len(kinds)]:
                violations.append(
                    Violation(r, "incomplete", f"round stops after {kinds[-1]} ({len(kinds)}/7 frames)")
                )
            else:
                violations.append(Violation(r, "grammar", f"frame sequence {kinds}"))
                verdicts += salvage
            continue

        start, lreq, lres, ff, freq, fres, verdict = (f["payload"] for f in frames)
        leader = start["leader"]
        follower = "B" if leader == "A" else "A"
        direction = "AB" if leader == "A" else "BA"
        basis = pauli[direction][start["setting"]]
        if lreq["party"] != leader or lres["party"] != leader:
            violations.append(Violation(r, "grammar", "leader frames from the wrong party"))
            continue
        if freq["party"] != follower or fres["party"] != follower:
            violations.append(Violation(r, "grammar", "follower frames from the wrong party"))
            continue
        if lreq["projector"] != basis:
            violations.append(
                Violation(r, "setting", f"leader measured {lreq['projector']}, setting requires {basis}")
            )
        if ff["outcome"] != lres["outcome"]:
            violations.append(
                Violation(r, "feed_forward", f"forwarded {ff['outcome']}, leader obtained {lres['outcome']}")
            )
        want = table.get((direction, basis, ff["outcome"]))
        if freq["projector"] != want:
            violations.append(
                Violation(
                    r, "feed_forward",
                    f"after {basis} outcome {ff['outcome']} the follower must test {want}, "
                    f"tested {freq['projector']}",
                )
            )
        if bool(verdict["accept"]) != bool(fres["outcome"]):
            violations.append(Violation(r, "verdict", "verdict disagrees with the follower's outcome"))
        verdicts.append(int(verdict["accept"]))

    for e in tail:
        if e["payload"].get("accepts") != sum(verdicts):
            violations.append(
                Violation(None, "counter", f"SESSION_END reports {e['payload'].get('accepts')} accepts, "
                                           f"transcript has {sum(verdicts)}")
            )
    if record is not None:
        if record.n != len(verdicts) or record.bitstring() != "".join(map(str, verdicts)):
            violations.append(
                Violation(None, "counter", f"record has {record.m}/{record.n}, transcript "
                                           f"{sum(verdicts)}/{len(verdicts)}")
            )
    return violations


def write_transcript(path, transcript: Sequence[dict]) -> None:
    with open(path, "w") as fh:
        for e in transcript:
            fh.write(json.dumps(e) + "\n")


def read_transcript(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# Realized operator --------------------------------------------------------

MIN_ROUNDS_PER_SETTING = 10


@dataclass
class RealizedOperatorReport:
    operator: np.ndarray
    intended: np.ndarray
    frobenius_distance: float
    implied_lambda2: float
    intended_lambda2: float
    frequencies: dict = field(default_factory=dict)
    low_confidence: bool = False

    def to_dict(self) -> dict:
        return {
            "frobenius_distance": self.frobenius_distance,
            "implied_lambda2": self.implied_lambda2,
            "intended_lambda2": self.intended_lambda2,
            "frequencies": {f"{d}:{l}": v for (d, l), v in sorted(self.frequencies.items())},
            "low_confidence": self.low_confidence,
        }


def realized_operator(theta: float, counts: Counter | dict, policy: str = "AB") -> RealizedOperatorReport | None:
    """Operator sum p_hat M over the (direction, setting) pairs actually used.

    The comparison target is the one-way operator for ``AB``/``BA`` and the
    effective two-way operator for ``bi``.  Returns None for an empty count
    table.
    """
    total = sum(counts.values())
    if total == 0:
        return None
    strategies = _settings_by_direction(theta)
    op = np.zeros((4, 4), dtype=complex)
    for (d, l), c in counts.items():
        op += c / total * strategies[d].settings[l].operator()
    if policy == "bi":
        intended = build_bi_locc(theta)
    else:
        intended = strategies[policy]
    expected_keys = [
        (d, l)
        for d in (("AB", "BA") if policy == "bi" else (policy,))
        for l in range(len(strategies[d].settings))
    ]
    low = any(counts.get(k, 0) < MIN_ROUNDS_PER_SETTING for k in expected_keys)
    return RealizedOperatorReport(
        operator=op,
        intended=np.asarray(intended.omega),
        frobenius_distance=float(np.linalg.norm(op - intended.omega)),
        implied_lambda2=float(q.eigh(op)[0][1]),
        intended_lambda2=intended.lambda2,
        frequencies={k: v / total for k, v in counts.items()},
        low_confidence=low,
    )
