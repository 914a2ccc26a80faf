"""Whole-machine cycle simulator.

Every cycle runs a router phase (at most one wavelet moved per color and
input port of each tile, multicast all-or-nothing, outputs arbitrated
C, L, R, U, D) and then a processor phase (one tick per tile processor).
Words a processor pushes become movable the next cycle; a fabric hop costs
hop_latency_cycles before the word can move on.

The machine is done when the executive has halted, every queue is empty and
every processor is idle.  A window with no router movement and no processor
progress raises DeadlockError with a dump of the blocked channels.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..lowering.layout import (
    ARGS_BCAST, COLOR_NAMES, EXEC, MERGE, MSG, RED_BCAST, RED_COL, RED_CTRL,
    RED_ROW, RED_UP_E, RED_UP_S, REDUCE, RESP, WORKER)
from ..lowering.vmprog import np_dtype
from ..memwords import decode_words
from ..refinterp import RefResult
from .config import SimConfig
from .roles import ExecCpu, MergeCpu, ReduceCpu, RespCpu, WorkerCpu
from .router import (
    ADVANCE, HEADER, OPPOSITE, RESET, Router, Wavelet, data, reset)


class DeadlockError(RuntimeError):
    def __init__(self, message: str, report: str):
        super().__init__(message + "\n" + report)
        self.report = report


@dataclass
class Message:
    mid: int
    src: tuple
    dst: tuple
    words: list = field(default_factory=list)
    hops: int = -1
    done: bool = False
    expect: int | None = None


class Machine:
    def __init__(self, vm, cfg: SimConfig | None = None):
        self.vm = vm
        self.cfg = cfg or SimConfig()
        self.cfg.validate()
        lay = vm.layout
        self.layout = lay
        self.cycle = 0
        self.routers = {}
        for x in range(lay.gw):
            for y in range(lay.gh):
                self.routers[(x, y)] = Router(
                    x, y, lay.routes.get((x, y), {}), self.cfg.fifo_depth)
        self.worker_image, self.ctrl_image = vm.build_images()
        self.injected = {c: 0 for c in COLOR_NAMES}
        self.delivered = {c: 0 for c in COLOR_NAMES}
        self.absorbed = {c: 0 for c in COLOR_NAMES}
        self.loop_trips = {lid: 0 for lid in vm.loop_ids}
        self.trace: list = []
        self.section_latencies: list = []
        self.pending_depart = None
        self.rpc_occupancy: dict = {}
        self.messages: dict[int, Message] = {}
        self._open_msgs: dict[tuple, Message] = {}
        self._next_mid = 0
        self._last_progress = 0

        h = self.cfg.hop_latency_cycles
        pad = self.cfg.control_path_latency - (3 * h + 3)
        self.cpus = []
        self.exec_cpu = None
        for xy, role in sorted(lay.roles.items()):
            if role == EXEC:
                cpu = ExecCpu(self, xy, self.ctrl_image)
                self.exec_cpu = cpu
            elif role == MERGE:
                cpu = MergeCpu(self, xy)
            elif role == RESP:
                p = lay.role_params[xy]
                pos = p["position"]
                cpu = RespCpu(self, xy, pos, p["last_on_side"],
                              vm.chunks[pos], pad if pos == 0 else 0)
            elif role == WORKER:
                p = lay.role_params[xy]
                cpu = WorkerCpu(self, xy, p,
                                self.worker_image[p["wx"], p["wy"]])
            elif role == REDUCE:
                cpu = ReduceCpu(self, xy, lay.role_params[xy])
            else:
                continue
            self.cpus.append(cpu)
        self.tile_order = sorted(self.routers)

    # --- tracing and stats ---------------------------------------------------

    def trace_event(self, kind: str, **fields) -> None:
        if self.cfg.trace:
            self.trace.append((self.cycle, kind, fields))

    def note_broadcast(self, section: int, seq: int) -> None:
        self.trace_event("section_broadcast", section=section, seq=seq)
        self.pending_depart = (seq, section, self.cycle)

    def record_occ(self, wx: int, wy: int, rid: int, occ: int) -> None:
        self.rpc_occupancy.setdefault((wx, wy, rid), []).append(occ)

    # --- router phase --------------------------------------------------------

    def neighbor(self, r: Router, out: str):
        dx, dy = {"L": (-1, 0), "R": (1, 0), "U": (0, -1), "D": (0, 1)}[out]
        return self.routers.get((r.x + dx, r.y + dy))

    def router_phase(self) -> bool:
        moved = False
        for xy in self.tile_order:
            r = self.routers[xy]
            if not r.fifos:
                continue
            used: dict = {}
            for color, port in r.busy_channels():
                if self.try_move(r, color, port, used):
                    moved = True
        return moved

    def try_move(self, r: Router, color: int, port: str, used: dict) -> bool:
        q = r.fifos[(color, port)]
        w, ready = q[0]
        if ready > self.cycle:
            return False
        if w.kind == ADVANCE:
            q.popleft()
            r.step_ring(color)
            self.absorbed[color] += 1
            return True
        if w.kind == HEADER:
            out = r.header_out(w)
            if r.out_locked(color, out):
                return False
            ok = self.commit(r, color, port, q, w, (out,), used)
            if ok:
                if w.length is None or w.length > 0:
                    r.locks[(color, out)] = [port, w.length]
                if out != "C":
                    w.hops += 1
                    self.trace_event("msg_hop", mid=w.mid,
                                     at=(r.x, r.y), out=out)
            return ok
        lock_out, ent = r.lock_for(color, port)
        if lock_out is not None:
            ok = self.commit(r, color, port, q, w, (lock_out,), used)
            if ok:
                if w.kind == RESET:
                    del r.locks[(color, lock_out)]
                elif ent[1] is not None:
                    ent[1] -= 1
                    if ent[1] <= 0:
                        del r.locks[(color, lock_out)]
            return ok
        outs = r.state(color).get(port)
        if outs is None:
            return False
        ok = self.commit(r, color, port, q, w, outs, used)
        if ok and w.kind == RESET and port != "C":
            r.step_ring(color)
        return ok

    def commit(self, r, color, port, q, w, outs, used) -> bool:
        u = used.setdefault(color, set())
        if any(o in u for o in outs):
            return False
        depth = self.cfg.fifo_depth
        h = self.cfg.hop_latency_cycles
        targets = []
        for o in outs:
            if o == "C":
                dq = r.delivery(color)
                if len(dq) >= depth:
                    return False
                targets.append((dq, self.cycle))
            else:
                nb = self.neighbor(r, o)
                assert nb is not None, (r.x, r.y, COLOR_NAMES.get(color), o)
                dq = nb.fifo(color, OPPOSITE[o])
                if len(dq) >= depth:
                    return False
                targets.append((dq, self.cycle + h))
        q.popleft()
        u.update(outs)
        for dq, rdy in targets:
            dq.append((w, rdy))
        if (self.pending_depart is not None and color == ARGS_BCAST
                and port == "C" and (r.x, r.y) == self.layout.merge_xy):
            seq, sec, g = self.pending_depart
            self.section_latencies.append((seq, sec, self.cycle - g))
            self.trace_event("args_depart_merge", seq=seq, section=sec,
                            latency=self.cycle - g)
            self.pending_depart = None
        return True

    # --- processor phase -----------------------------------------------------

    def cpu_phase(self) -> bool:
        prog = False
        for cpu in self.cpus:
            if cpu.tick():
                prog = True
        if self._collect_messages():
            prog = True
        return prog

    def _collect_messages(self) -> bool:
        prog = False
        for xy, r in self.routers.items():
            q = r.outbox.get(MSG)
            while q:
                w, ready = q[0]
                if ready > self.cycle:
                    break
                q.popleft()
                self.delivered[MSG] += 1
                prog = True
                if w.kind == HEADER:
                    msg = self.messages[w.mid]
                    msg.hops = w.hops
                    msg.expect = w.length
                    self._open_msgs[xy] = msg
                    if w.length == 0:
                        msg.done = True
                        del self._open_msgs[xy]
                elif w.kind == RESET:
                    msg = self._open_msgs.pop(xy)
                    msg.done = True
                else:
                    msg = self._open_msgs[xy]
                    msg.words.append(w.word)
                    if msg.expect is not None and len(msg.words) == msg.expect:
                        msg.done = True
                        del self._open_msgs[xy]
        return prog

    # --- stepping ------------------------------------------------------------

    def step(self) -> None:
        self.cycle += 1
        moved = self.router_phase()
        prog = self.cpu_phase()
        if moved or prog:
            self._last_progress = self.cycle
        elif self.cycle - self._last_progress >= self.cfg.deadlock_window:
            raise DeadlockError(
                f"no progress for {self.cfg.deadlock_window} cycles",
                self.deadlock_report())

    @property
    def done(self) -> bool:
        if self.exec_cpu is not None and not self.exec_cpu.halted:
            return False
        if any(r.occupancy() for r in self.routers.values()):
            return False
        return all(c.idle for c in self.cpus)

    def _skippable(self) -> int:
        if any(r.occupancy() for r in self.routers.values()):
            return 0
        leaps = []
        for c in self.cpus:
            d = c.countdown()
            if d is None:
                continue
            if d < 2:
                return 0
            leaps.append(d)
        return min(leaps) - 1 if leaps else 0

    def run(self, max_cycles: int | None = None) -> None:
        cap = max_cycles or self.cfg.max_cycles
        while not self.done:
            n = self._skippable()
            if n > 0:
                self.cycle += n
                self._last_progress = self.cycle
                for c in self.cpus:
                    if c.countdown() not in (None, 0):
                        c.leap(n)
            self.step()
            if self.cycle > cap:
                raise DeadlockError(
                    f"exceeded {cap} cycles without finishing",
                    self.deadlock_report())
        self.assert_quiescent()

    def assert_quiescent(self) -> None:
        leftovers = [
            (xy, COLOR_NAMES.get(c, c), p, len(q))
            for xy, r in self.routers.items()
            for (c, p), q in r.fifos.items() if q
        ]
        assert not leftovers, f"wavelets left in the fabric: {leftovers}"

    def deadlock_report(self) -> str:
        lines = []
        for xy in self.tile_order:
            r = self.routers[xy]
            for (c, p), q in sorted(r.fifos.items()):
                if q:
                    w, ready = q[0]
                    lines.append(
                        f"  {xy} {COLOR_NAMES.get(c, c)} in={p} depth={len(q)} "
                        f"head={w.kind}/{w.word} ready={ready} "
                        f"ring={r.ring_idx.get(c, 0)}")
            for c, q in sorted(r.outbox.items()):
                if q:
                    lines.append(f"  {xy} {COLOR_NAMES.get(c, c)} delivery "
                                 f"depth={len(q)} head={q[0][0].kind}")
        for cpu in self.cpus:
            if not cpu.idle:
                lines.append(f"  {cpu.xy} {cpu.role} state="
                             f"{getattr(cpu, 'state', '?')}")
        return "blocked channels:\n" + "\n".join(lines) if lines else "(empty fabric)"

    # --- messages ------------------------------------------------------------

    def send_message(self, src: tuple, dst: tuple, payload,
                     terminated: bool = False) -> int:
        if dst not in self.routers:
            raise ValueError(f"message destination {dst} is off the fabric")
        words = [int(v) & 0xFFFF for v in payload]
        if not terminated and len(words) > 31:
            raise ValueError(
                f"{len(words)} payload words exceed the 5-bit length field; "
                "use a reset-terminated message")
        mid = self._next_mid
        self._next_mid += 1
        head = Wavelet(HEADER, 0, dst=dst, mid=mid,
                       length=None if terminated else len(words))
        msg = Message(mid, src, dst)
        self.messages[mid] = msg
        r = self.routers[src]
        q = r.fifo(MSG, "C")
        q.append((head, self.cycle + 1))
        self.injected[MSG] += 1
        for v in words:
            q.append((data(v), self.cycle + 1))
            self.injected[MSG] += 1
        if terminated:
            q.append((reset(), self.cycle + 1))
            self.injected[MSG] += 1
        return mid

    def run_message(self, mid: int, limit: int = 100_000) -> Message:
        msg = self.messages[mid]
        start = self.cycle
        while not msg.done:
            self.step()
            if self.cycle - start > limit:
                raise DeadlockError("message not delivered", self.deadlock_report())
        return msg

    # --- results -------------------------------------------------------------

    def result(self, tainted=frozenset()) -> RefResult:
        vm = self.vm
        values = {}
        for mlid in vm.observables:
            s = vm.symbol(mlid)
            if s.space == "controller":
                words = self.ctrl_image[s.address:s.address + s.size_words]
                values[mlid] = decode_words(words, s.dtype, s.shape).copy()
                continue
            arr = np.empty(s.shape, dtype=np_dtype(s.dtype))
            for wx in range(vm.nx):
                for wy in range(vm.ny):
                    words = self.worker_image[
                        wx, wy, s.address:s.address + s.size_words]
                    arr[wx, wy] = decode_words(words, s.dtype, s.mem_shape)
            values[mlid] = arr
        return RefResult(values=values, loop_trips=dict(self.loop_trips),
                         tainted=set(tainted))

    def stats(self) -> dict:
        busy = {}
        for (wx, wy, rid), occs in self.rpc_occupancy.items():
            busy[(wx, wy)] = busy.get((wx, wy), 0) + sum(occs)
        return {
            "cycles": self.cycle,
            "injected": {COLOR_NAMES[c]: n for c, n in self.injected.items() if n},
            "delivered": {COLOR_NAMES[c]: n for c, n in self.delivered.items() if n},
            "absorbed": {COLOR_NAMES[c]: n for c, n in self.absorbed.items() if n},
            "loop_trips": dict(self.loop_trips),
            "section_latencies": list(self.section_latencies),
            "worker_busy": busy,
            "reduction_stages": {
                "column_partials": self.delivered[RED_COL],
                "row_segments": self.delivered[RED_ROW],
                "corner_east": self.delivered[RED_UP_E],
                "corner_south": self.delivered[RED_UP_S],
                "field_broadcast": self.delivered[RED_BCAST],
                "to_controller": self.delivered[RED_CTRL],
            },
        }


def simulate(vm, cfg: SimConfig | None = None, tainted=frozenset()) -> RefResult:
    m = Machine(vm, cfg)
    m.run()
    return m.result(tainted)
