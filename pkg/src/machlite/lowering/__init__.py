"""Lowering: turn a planned graph into per-role virtual machine programs.

partition     graph -> broadcast sections + executive instruction list
distribute    sections -> per-response-tile chunk assignments in drain order
build_masks   participation-filter table for every distinct worker slicing
lower         the whole pipeline, returning a validated VMachineProgram
emit_text     deterministic textual listings (see emit)
"""

from __future__ import annotations

from ..irg import IRGraph, node_placement, ordered_walk
from ..memplan import MemPlan, lifespans
from ..refinterp import full_shape
from .distribute import RespChunk, assign_sections, chunk_sizes, resp_words, split_even
from .layout import COLOR_IDS, COLOR_NAMES, FabricLayout, build_layout
from .masks import MaskEntry, MaskTable, mask_bit, region_members
from .rpc import RpcDef, RpcTable
from .sections import GraphLowerer, Instr, Section
from .vmprog import MemSym, VMachineProgram, WORKER_WORDS

__all__ = [
    "COLOR_IDS", "COLOR_NAMES", "FabricLayout", "GraphLowerer", "Instr",
    "MaskEntry", "MaskTable", "MemSym", "RespChunk", "RpcDef", "RpcTable",
    "Section", "VMachineProgram", "WORKER_WORDS", "assign_sections",
    "build_layout", "build_masks", "chunk_sizes", "distribute", "lower",
    "mask_bit", "partition", "region_members", "resp_words", "split_even",
]


def partition(g: IRGraph, plan: MemPlan, mask_table: MaskTable | None = None):
    """Sections plus the executive skeleton; returns (sections, instrs, rpcs, masks)."""
    low = GraphLowerer(g, plan, mask_table if mask_table is not None else MaskTable())
    sections, instrs, rpcs = low.lower()
    return sections, instrs, rpcs, low.masks


def distribute(sections, n_resp: int):
    return assign_sections(sections, n_resp)


def build_masks(g: IRGraph, plan: MemPlan) -> MaskTable:
    """Intern every distinct worker slicing of the graph, in execution order."""
    table = MaskTable()
    for n in ordered_walk(g):
        region = n.attrs.get("region")
        if region is not None and node_placement(g, n) == "worker":
            table.intern(region, plan)
    return table


def worker_nodes(g: IRGraph) -> set[int]:
    return {n.id for n in ordered_walk(g)
            if n.op_name not in ("sg_export", "sg_import")
            and node_placement(g, n) == "worker"}


def lower(g: IRGraph, plan: MemPlan, *, n_resp: int = 4,
          resp_capacity: int = 3000, task_table_size: int = 16) -> VMachineProgram:
    nx, ny = g.grid
    masks = MaskTable()
    sections, instrs, rpcs, masks = partition(g, plan, masks)
    while True:
        chunks = assign_sections(sections, n_resp)
        if max(resp_words(per) for per in chunks) <= resp_capacity:
            break
        n_resp += 2             # reserve tiles join the flanks on demand
    layout = build_layout(nx, ny, n_resp)

    spans = lifespans(g)
    observables = sorted(mlid for mlid, ml in g.memlocs.items()
                         if ml.kind != "temporary" and mlid in spans)
    symbols = []
    for mlid in sorted(plan.entries):
        ml = g.memlocs[mlid]
        e = plan.entries[mlid]
        symbols.append(MemSym(
            mlid=mlid, name=ml.name, space=e.space,
            address=plan.address_words(mlid), size_words=e.size_words,
            dtype=ml.dtype, kind=ml.kind, var_kind=ml.var_kind,
            shape=tuple(full_shape(g, ml)), mem_shape=tuple(ml.mem_shape)))
    loop_ids = [n.id for n in ordered_walk(g) if n.op_name == "loop"]

    prog = VMachineProgram(
        nx=nx, ny=ny, n_resp=n_resp, layout=layout, instrs=instrs,
        sections=sections, chunks=chunks, rpcs=rpcs, masks=masks,
        symbols=symbols, inits=dict(g.inits), observables=observables,
        worker_node_ids=worker_nodes(g), loop_ids=loop_ids,
        task_table_size=task_table_size, resp_capacity=resp_capacity)
    prog.validate()
    return prog
