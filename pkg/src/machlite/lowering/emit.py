"""Deterministic textual listings for a lowered program, with a loader.

emit_text produces one pseudo-assembly file per role plus a layout file.
The exec file is the single source of truth for program state (instructions,
sections, symbols, init data, masks); the worker file carries the RPC table.
The other files are derived views: the loader rebuilds them from the same
state, which is what makes re-emission byte-identical.
"""

from __future__ import annotations

import re

import numpy as np

from ..frontend.syntax import DType, VarKind
from ..memwords import decode_words, encode_words
from .distribute import assign_sections
from .layout import COLOR_NAMES, build_layout
from .masks import MaskEntry, MaskTable
from .rpc import MASKED_KINDS, OperandSpec, RpcDef, RpcTable
from .sections import Instr, Section
from .vmprog import MemSym, VMachineProgram

ROLE_FILES = ("exec.asm", "worker.asm", "reduce.asm", "resp.asm", "merge.asm",
              "paint.txt")


# --- helpers ----------------------------------------------------------------

def _hex(words) -> str:
    return " ".join(f"{int(w) & 0xFFFF:04x}" for w in words)


def _operand(o: tuple) -> str:
    if not o:
        return "-"
    if o[0] == "a":
        return f"@{o[1]}"
    return "#" + ":".join(str(int(w) & 0xFFFF) for w in o[1])


def _parse_operand(tok: str) -> tuple:
    if tok == "-":
        return ()
    if tok.startswith("@"):
        return ("a", int(tok[1:]))
    return ("i", tuple(int(w) for w in tok[1:].split(":")))


def _instr_line(i: int, ins: Instr) -> str:
    if ins.op == "mov":
        return f"{i}: mov.{ins.dtype} @{ins.dst}, {_operand(ins.a)}"
    if ins.op == "bin":
        return f"{i}: {ins.binop}.{ins.dtype} @{ins.dst}, {_operand(ins.a)}, {_operand(ins.b)}"
    if ins.op == "cmp_br":
        return (f"{i}: cmp_br.{ins.dtype} {ins.cmp} {_operand(ins.a)}, "
                f"{_operand(ins.b)} -> {ins.target}")
    if ins.op == "load_ga":
        return (f"{i}: load_ga.{ins.dtype} @{ins.dst}, @{ins.base}"
                f"[{_operand(ins.a)}]*{ins.width}")
    if ins.op == "jump":
        return f"{i}: jump {ins.target}"
    if ins.op == "trip":
        return f"{i}: trip {ins.loop_id}"
    if ins.op == "bcast":
        return f"{i}: bcast {ins.section}"
    if ins.op == "recv":
        return f"{i}: recv.{ins.dtype} @{ins.dst}"
    if ins.op == "halt":
        return f"{i}: halt"
    raise ValueError(ins.op)


_BIN_OPS = ("add", "sub", "mul", "div")


def _parse_instr(line: str) -> Instr:
    head, _, rest = line.partition(": ")
    del head
    m = re.match(r"(\w+)(?:\.(\w+))?\s*(.*)$", rest)
    op, dt, body = m.group(1), m.group(2) or "", m.group(3)
    if op == "mov":
        d, a = body.split(", ")
        return Instr("mov", dtype=dt, dst=int(d[1:]), a=_parse_operand(a))
    if op in _BIN_OPS:
        d, a, b = body.split(", ")
        return Instr("bin", dtype=dt, binop=op, dst=int(d[1:]),
                     a=_parse_operand(a), b=_parse_operand(b))
    if op == "cmp_br":
        m = re.match(r"(\S+) (\S+), (\S+) -> (\d+)$", body)
        return Instr("cmp_br", dtype=dt, cmp=m.group(1),
                     a=_parse_operand(m.group(2)), b=_parse_operand(m.group(3)),
                     target=int(m.group(4)))
    if op == "load_ga":
        m = re.match(r"@(\d+), @(\d+)\[(\S+)\]\*(\d+)$", body)
        return Instr("load_ga", dtype=dt, dst=int(m.group(1)), base=int(m.group(2)),
                     a=_parse_operand(m.group(3)), width=int(m.group(4)))
    if op == "jump":
        return Instr("jump", target=int(body))
    if op == "trip":
        return Instr("trip", loop_id=int(body))
    if op == "bcast":
        return Instr("bcast", section=int(body))
    if op == "recv":
        return Instr("recv", dtype=dt, dst=int(body[1:]))
    if op == "halt":
        return Instr("halt")
    raise ValueError(line)


def _rpc_line(d: RpcDef) -> str:
    srcs = ",".join(f"{s.token}/{s.words}" for s in d.srcs) or "-"
    dst = f"{d.dst.token}/{d.dst.words}" if d.dst else "-"
    tail = f" target={d.target}" if d.target else ""
    return (f"{d.rid} {d.name} kind={d.kind} op={d.op or '-'} dt={d.dtype} "
            f"srcs={srcs} dst={dst} arity={d.arity}{tail}")


def _parse_specs(tok: str):
    if tok == "-":
        return ()
    return tuple(OperandSpec(t, int(w))
                 for t, w in (p.split("/") for p in tok.split(",")))


def _parse_rpc(line: str) -> RpcDef:
    parts = line.split()
    rid, name = int(parts[0]), parts[1]
    kv = dict(p.split("=", 1) for p in parts[2:])
    srcs = _parse_specs(kv["srcs"])
    dst = _parse_specs(kv["dst"])
    return RpcDef(name, rid, kv["kind"], "" if kv["op"] == "-" else kv["op"],
                  kv["dt"], srcs, dst[0] if dst else None,
                  kv.get("target", ""), int(kv["arity"]))


def _ring_str(rr) -> str:
    states = []
    for st in rr:
        states.append("&".join(f"{i}>{'+'.join(outs)}" for i, outs in st))
    return "|".join(states)


def _kernel_body(d: RpcDef) -> list[str]:
    """Readable restatement of what the worker does for one RPC."""
    out = [f"  recv ctrl; recv args[{d.arity}]"]
    at = 0
    for k, s in enumerate(d.srcs):
        out.append(f"  src{k} {s.token} args[{at}:{at + s.words}]")
        at += s.words
    if d.dst is not None:
        out.append(f"  dst {d.dst.token} args[{at}:{at + d.dst.words}]")
        at += d.dst.words
    if d.kind in MASKED_KINDS:
        out.append(f"  mask @args[{at}]; len args[{at + 1}]")
        at += 2
    if d.kind == "reduce_send":
        out.append(f"  mask @args[{at}]")
        at += 1
    if d.has_dyn:
        out.append(f"  dyn_stop @args[{at}]")
        at += 1
    act = {
        "map": f"  apply {d.op}.{d.dtype} over len*mask elements",
        "gather": "  loopback indexes; 2 cycles per element",
        "gather_mul": "  loopback indexes, multiply; 2 cycles per element",
        "scatter": "  loopback indexes, store; 2 cycles per element",
        "shift": "  exchange with the checkerboard neighbor",
        "reduce_send": "  partial sum -> reduction column",
        "reduce_bcast": "  recv broadcast value -> local scalar",
    }[d.kind]
    out.append(act)
    return out


# --- emission ---------------------------------------------------------------

def emit_exec(vm: VMachineProgram) -> str:
    L = ["; executive program", "[meta]",
         f"grid {vm.nx} {vm.ny}",
         f"resp {vm.n_resp}",
         f"resp_capacity {vm.resp_capacity}",
         f"task_table {vm.task_table_size}",
         "[exec]"]
    L += [_instr_line(i, ins) for i, ins in enumerate(vm.instrs)]
    L.append("[sections]")
    for sec in vm.sections:
        nodes = ",".join(str(n) for n in sec.node_ids)
        L.append(f"section {sec.index} nodes={nodes}")
        L.append("  ctrl: " + " ".join(str(r) for r in sec.ctrl_vector))
        L.append("  args: " + _hex(sec.args_vector))
        for pos, width, addr in sec.splices:
            L.append(f"  splice pos={pos} width={width} addr={addr}")
    L.append("[symbols]")
    for s in vm.symbols:
        shape = ",".join(str(d) for d in s.shape) or "-"
        mem = ",".join(str(d) for d in s.mem_shape) or "-"
        obs = " obs" if s.mlid in vm.observables else ""
        vk = s.var_kind.value if s.var_kind is not None else "-"
        L.append(f"{s.mlid} {s.name} {s.space} @{s.address} size={s.size_words} "
                 f"{s.dtype.value} {vk} {s.kind} "
                 f"shape={shape} mem={mem}{obs}")
    L.append("[data]")
    for mlid in sorted(vm.inits):
        arr = np.asarray(vm.inits[mlid])
        L.append(f"{mlid}: " + _hex(encode_words(arr, vm.symbol(mlid).dtype)))
    L.append("[masks]")
    for e in vm.masks.ordered():
        sig = "x".join("(" + ",".join(str(v) for v in ax) + ")" for ax in e.sig)
        L.append(f"{e.index} @{e.address} {sig}")
    if vm.virtual_tasks:
        L.append("[virtual_tasks]")
        for d in vm.rpcs.defs:
            L.append(f"{d.rid} -> bank={d.rid // vm.task_table_size} "
                     f"slot={d.rid % vm.task_table_size}")
    return "\n".join(L) + "\n"


def emit_worker(vm: VMachineProgram) -> str:
    L = ["; worker kernels", "[rpcs]"]
    for d in vm.rpcs.defs:
        L.append(_rpc_line(d))
        L += _kernel_body(d)
    return "\n".join(L) + "\n"


def emit_reduce(vm: VMachineProgram) -> str:
    L = ["; reduction row program",
         "; stage 1: accumulate column partials until the column-end marker",
         "; stage 2: drain row segments inward, outermost marker restores rings",
         "; stage 3: corner tiles merge into the final tile",
         "; stage 4: broadcast to workers (uls) or to the executive (gs)",
         "[stubs]"]
    for d in vm.rpcs.defs:
        if d.kind == "reduce_send":
            L.append(f"{d.rid} {d.name}: accumulate.{d.dtype}")
        elif d.kind == "reduce_bcast":
            L.append(f"{d.rid} {d.name}: pass")
        else:
            L.append(f"{d.rid} {d.name}: drain args[{d.arity}]")
    return "\n".join(L) + "\n"


def emit_resp(vm: VMachineProgram) -> str:
    L = ["; response tile assignments (chunks in drain order)"]
    for pos in range(vm.n_resp):
        x, y = vm.layout.resp_order[pos]
        p = vm.layout.role_params[(x, y)]
        L.append(f"position {pos} tile={x},{y} side={p['side']} "
                 f"last={'yes' if p['last_on_side'] else 'no'}")
        for chunk in vm.chunks[pos]:
            L.append(f"  section {chunk.section}: ctrl[{len(chunk.ctrl)}] "
                     f"args[{len(chunk.args)}] splices[{len(chunk.splices)}]")
    return "\n".join(L) + "\n"


def emit_merge(vm: VMachineProgram) -> str:
    x, y = vm.layout.merge_xy
    return "\n".join([
        "; merge tile program",
        f"tile={x},{y}",
        "loop:",
        "  pop ctrl_drain -> push ctrl_bcast; chunk markers advance the ring",
        "  pop args_drain -> push args_bcast; chunk markers advance the ring",
        f"  after {vm.n_resp} markers on both colors: push ack",
    ]) + "\n"


def emit_paint(vm: VMachineProgram) -> str:
    lay = vm.layout
    L = ["; fabric layout", f"[grid] {lay.gw} {lay.gh} workers {lay.nx} {lay.ny} "
         f"resp {lay.n_resp}"]
    L.append("[roles]")
    letter = {"exec": "E", "merge": "M", "resp": "R", "worker": "w",
              "reduce": "r", "spine": "s", "unused": "."}
    for y in range(lay.gh):
        row = "".join(letter[lay.roles[(x, y)]] for x in range(lay.gw))
        L.append(f"y={y:<2d} {row}")
    L.append("[resp_order] " + " ".join(f"{x},{y}" for x, y in lay.resp_order))
    L.append("[routes]")
    for (x, y) in sorted(lay.routes):
        for color in sorted(lay.routes[(x, y)]):
            L.append(f"{x},{y} {COLOR_NAMES[color]} "
                     f"{_ring_str(lay.routes[(x, y)][color])}")
    L.append("[params]")
    for (x, y) in sorted(lay.role_params):
        kv = " ".join(f"{k}={v}" for k, v in sorted(lay.role_params[(x, y)].items()))
        L.append(f"{x},{y} {kv}")
    return "\n".join(L) + "\n"


def emit_text(vm: VMachineProgram) -> dict[str, str]:
    return {
        "exec.asm": emit_exec(vm),
        "worker.asm": emit_worker(vm),
        "reduce.asm": emit_reduce(vm),
        "resp.asm": emit_resp(vm),
        "merge.asm": emit_merge(vm),
        "paint.txt": emit_paint(vm),
    }


# --- loading ----------------------------------------------------------------

def _sections_of(lines) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    current = None
    for raw in lines:
        line = raw.rstrip()
        if not line or line.startswith(";"):
            continue
        m = re.match(r"\[(\w+)\]", line)
        if m:
            current = m.group(1)
            out[current] = []
            rest = line[m.end():].strip()
            if rest:
                out[current].append(rest)
            continue
        out[current].append(line)
    return out


_DT = {"f32": DType.F32, "i16": DType.I16}
_VK = {k.value: k for k in VarKind} | {"-": None}


def load_text(files: dict[str, str]) -> VMachineProgram:
    """Rebuild a VMachineProgram from emitted listings (exec + worker files)."""
    ex = _sections_of(files["exec.asm"].splitlines())
    wk = _sections_of(files["worker.asm"].splitlines())

    meta = dict(line.split(None, 1) for line in ex["meta"])
    nx, ny = (int(v) for v in meta["grid"].split())
    n_resp = int(meta["resp"])

    instrs = [_parse_instr(line) for line in ex["exec"]]

    rpcs = RpcTable()
    for line in wk["rpcs"]:
        if line.startswith(" ") or not line[0].isdigit():
            continue
        d = _parse_rpc(line)
        rpcs.by_name[d.name] = d
        rpcs.defs.append(d)

    sections: list[Section] = []
    for line in ex.get("sections", []):
        if line.startswith("section "):
            m = re.match(r"section (\d+) nodes=(\S*)", line)
            nodes = [int(v) for v in m.group(2).split(",") if v]
            sections.append(Section(index=int(m.group(1)), node_ids=nodes))
        elif line.lstrip().startswith("ctrl:"):
            body = line.split(":", 1)[1].split()
            sections[-1].ctrl_vector = [int(v) for v in body]
        elif line.lstrip().startswith("args:"):
            body = line.split(":", 1)[1].split()
            sections[-1].args_vector = [int(v, 16) for v in body]
        else:
            kv = dict(p.split("=") for p in line.split()[1:])
            sections[-1].splices.append(
                (int(kv["pos"]), int(kv["width"]), int(kv["addr"])))

    symbols, observables = [], []
    for line in ex["symbols"]:
        parts = line.split()
        mlid, name, space = int(parts[0]), parts[1], parts[2]
        addr = int(parts[3][1:])
        size = int(parts[4].split("=")[1])
        dt, vk, kind = _DT[parts[5]], _VK[parts[6]], parts[7]
        shp = parts[8].split("=")[1]
        shape = tuple(int(v) for v in shp.split(",")) if shp != "-" else ()
        mm = parts[9].split("=")[1]
        mem = tuple(int(v) for v in mm.split(",")) if mm != "-" else ()
        symbols.append(MemSym(mlid, name, space, addr, size, dt, kind, vk,
                              shape, mem))
        if parts[-1] == "obs":
            observables.append(mlid)

    by_mlid = {s.mlid: s for s in symbols}
    inits = {}
    for line in ex.get("data", []):
        head, _, body = line.partition(": ")
        mlid = int(head)
        words = np.array([int(v, 16) for v in body.split()], dtype=np.uint16)
        s = by_mlid[mlid]
        shape = () if s.var_kind is VarKind.ULS else s.shape
        arr = decode_words(words, s.dtype, shape)
        arr.setflags(write=False)
        inits[mlid] = arr

    masks = MaskTable()
    for line in ex.get("masks", []):
        parts = line.split()
        addr = int(parts[1][1:])
        sig = tuple(tuple(int(v) for v in ax.strip("()").split(","))
                    for ax in parts[2].split("x"))
        masks.entries[sig] = MaskEntry(sig, int(parts[0]), addr)

    layout = build_layout(nx, ny, n_resp)
    chunks = assign_sections(sections, n_resp)
    worker_ids = set()
    for sec in sections:
        worker_ids.update(sec.node_ids)
    loop_ids = sorted({i.loop_id for i in instrs if i.op == "trip"})

    return VMachineProgram(
        nx=nx, ny=ny, n_resp=n_resp, layout=layout, instrs=instrs,
        sections=sections, chunks=chunks, rpcs=rpcs, masks=masks,
        symbols=symbols, inits=inits, observables=observables,
        worker_node_ids=worker_ids, loop_ids=loop_ids,
        task_table_size=int(meta["task_table"]),
        resp_capacity=int(meta["resp_capacity"]))
