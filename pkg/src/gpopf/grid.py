"""Grid model: case loading, validation, bus admittance and the model I/O schema.

Case files are JSON in physical units (MW / MVAr / MVA for powers, per-unit
branch impedances on ``base_mva``).  ``load_case`` converts every power
quantity to per-unit; everything downstream works in per-unit only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

BUS_KINDS = ("slack", "generator", "load")


class CaseError(ValueError):
    """Raised for unparseable or physically inconsistent case files."""


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    v_min: float
    v_max: float
    p_load: float = 0.0
    q_load: float = 0.0
    p_res: float = 0.0
    q_res: float = 0.0


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_shunt: float
    s_max: float


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    v_set: float
    c2: float
    c1: float
    c0: float


@dataclass(frozen=True)
class GridCase:
    """Immutable per-unit snapshot of a transmission grid."""

    case_id: str
    base_mva: float
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]

    def __post_init__(self):
        _validate_case(self)

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def bus_index(self, bus_id: int) -> int:
        try:
            return self.bus_ids.index(bus_id)
        except ValueError:
            raise CaseError(f"unknown bus id {bus_id}") from None

    @property
    def slack_gen(self) -> int:
        """Index into ``generators`` of the slack-bus machine."""
        slack_bus = next(b.id for b in self.buses if b.kind == "slack")
        for k, g in enumerate(self.generators):
            if g.bus == slack_bus:
                return k
        raise CaseError("slack bus has no generator")

    def gen_order(self) -> list[int]:
        """Generator indices sorted by bus id (deterministic block order)."""
        return sorted(range(len(self.generators)), key=lambda k: self.generators[k].bus)


def _validate_case(case: GridCase) -> None:
    if case.base_mva <= 0:
        raise CaseError(f"base_mva must be positive, got {case.base_mva}")
    ids = [b.id for b in case.buses]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise CaseError(f"duplicate bus ids {dupes}")
    kinds = [b.kind for b in case.buses]
    for b in case.buses:
        if b.kind not in BUS_KINDS:
            raise CaseError(f"bus {b.id}: unknown kind {b.kind!r}")
        if not b.v_min < b.v_max:
            raise CaseError(f"bus {b.id}: requires v_min < v_max")
        if b.p_load < 0 or b.p_res < 0:
            raise CaseError(f"bus {b.id}: p_load and p_res must be non-negative")
    if kinds.count("slack") != 1:
        raise CaseError(f"exactly one slack bus required, found {kinds.count('slack')}")
    id_set = set(ids)
    for i, ln in enumerate(case.lines):
        if ln.from_bus not in id_set or ln.to_bus not in id_set:
            raise CaseError(f"line {i}: endpoint ({ln.from_bus}, {ln.to_bus}) not a bus")
        if ln.from_bus == ln.to_bus:
            raise CaseError(f"line {i}: self-loop on bus {ln.from_bus}")
        if ln.r < 0:
            raise CaseError(f"line {i}: negative resistance")
        if ln.x == 0:
            raise CaseError(f"line {i}: zero reactance")
        if ln.s_max <= 0:
            raise CaseError(f"line {i}: s_max must be positive")
    gen_buses = [g.bus for g in case.generators]
    if len(set(gen_buses)) != len(gen_buses):
        raise CaseError("multiple generators on one bus are not supported")
    by_id = {b.id: b for b in case.buses}
    for k, g in enumerate(case.generators):
        if g.bus not in id_set:
            raise CaseError(f"generator {k}: unknown bus {g.bus}")
        if by_id[g.bus].kind == "load":
            raise CaseError(f"generator {k}: bus {g.bus} has kind 'load'")
        if not g.p_min < g.p_max:
            raise CaseError(f"generator {k}: requires p_min < p_max")
        if not g.q_min < g.q_max:
            raise CaseError(f"generator {k}: requires q_min < q_max")
    for b in case.buses:
        if b.kind in ("slack", "generator") and b.id not in set(gen_buses):
            raise CaseError(f"bus {b.id} has kind {b.kind!r} but no generator")
    if not _connected(case):
        raise CaseError("network is not connected")


def _connected(case: GridCase) -> bool:
    adj: dict[int, set[int]] = {b.id: set() for b in case.buses}
    for ln in case.lines:
        adj[ln.from_bus].add(ln.to_bus)
        adj[ln.to_bus].add(ln.from_bus)
    seen = {case.buses[0].id}
    stack = [case.buses[0].id]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == case.n_bus


def case_from_dict(data: dict, case_id: str = "case") -> GridCase:
    """Build a per-unit GridCase from a raw (physical-unit) case dictionary."""
    try:
        base = float(data["base_mva"])
    except KeyError:
        raise CaseError("missing field 'base_mva'") from None
    if base <= 0:
        raise CaseError(f"base_mva must be positive, got {base}")

    def _req(record: dict, key: str, where: str) -> float:
        if key not in record:
            raise CaseError(f"{where}: missing field {key!r}")
        return record[key]

    buses = []
    for i, rec in enumerate(data.get("buses", [])):
        where = f"bus entry {i}"
        buses.append(Bus(
            id=int(_req(rec, "id", where)),
            kind=str(_req(rec, "kind", where)),
            v_min=float(_req(rec, "v_min", where)),
            v_max=float(_req(rec, "v_max", where)),
            p_load=float(rec.get("p_load", 0.0)) / base,
            q_load=float(rec.get("q_load", 0.0)) / base,
            p_res=float(rec.get("p_res", 0.0)) / base,
            q_res=float(rec.get("q_res", 0.0)) / base,
        ))
    lines = []
    for i, rec in enumerate(data.get("lines", [])):
        where = f"line entry {i}"
        lines.append(Line(
            from_bus=int(_req(rec, "from", where)),
            to_bus=int(_req(rec, "to", where)),
            r=float(_req(rec, "r", where)),
            x=float(_req(rec, "x", where)),
            b_shunt=float(rec.get("b_shunt", 0.0)),
            s_max=float(_req(rec, "s_max", where)) / base,
        ))
    gens = []
    for i, rec in enumerate(data.get("generators", [])):
        where = f"generator entry {i}"
        gens.append(Generator(
            bus=int(_req(rec, "bus", where)),
            p_min=float(_req(rec, "p_min", where)) / base,
            p_max=float(_req(rec, "p_max", where)) / base,
            q_min=float(_req(rec, "q_min", where)) / base,
            q_max=float(_req(rec, "q_max", where)) / base,
            v_set=float(rec.get("v_set", 1.0)),
            c2=float(rec.get("c2", 0.0)),
            c1=float(rec.get("c1", 0.0)),
            c0=float(rec.get("c0", 0.0)),
        ))
    return GridCase(case_id=case_id, base_mva=base,
                    buses=tuple(buses), lines=tuple(lines), generators=tuple(gens))


def case_to_dict(case: GridCase) -> dict:
    """Inverse of ``case_from_dict``: physical-unit dictionary (round-trips exactly)."""
    base = case.base_mva
    return {
        "base_mva": base,
        "buses": [{
            "id": b.id, "kind": b.kind, "v_min": b.v_min, "v_max": b.v_max,
            "p_load": b.p_load * base, "q_load": b.q_load * base,
            "p_res": b.p_res * base, "q_res": b.q_res * base,
        } for b in case.buses],
        "lines": [{
            "from": ln.from_bus, "to": ln.to_bus, "r": ln.r, "x": ln.x,
            "b_shunt": ln.b_shunt, "s_max": ln.s_max * base,
        } for ln in case.lines],
        "generators": [{
            "bus": g.bus, "p_min": g.p_min * base, "p_max": g.p_max * base,
            "q_min": g.q_min * base, "q_max": g.q_max * base, "v_set": g.v_set,
            "c2": g.c2, "c1": g.c1, "c0": g.c0,
        } for g in case.generators],
    }


def load_case(path_or_name) -> GridCase:
    """Load a case from a JSON file path or a built-in name like ``case9``."""
    name = str(path_or_name)
    if name in builtin_case_names():
        text = resources.files("gpopf.cases").joinpath(f"{name}.json").read_text()
        case_id = name
    else:
        try:
            with open(name) as fh:
                text = fh.read()
        except OSError as exc:
            raise CaseError(f"cannot read case file {name}: {exc}") from None
        case_id = name.rsplit("/", 1)[-1].removesuffix(".json")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"{name}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return case_from_dict(data, case_id=case_id)


def builtin_case_names() -> list[str]:
    entries = resources.files("gpopf.cases").iterdir()
    return sorted(p.name.removesuffix(".json") for p in entries if p.name.endswith(".json"))


def build_admittance(case: GridCase) -> tuple[np.ndarray, np.ndarray]:
    """Dense bus-admittance matrices (G, B) including line charging shunts.

    Series admittance of a line is y = 1/(r + jx); each end picks up half of
    the charging susceptance b_shunt.
    """
    n = case.n_bus
    Y = np.zeros((n, n), dtype=complex)
    pos = {bid: i for i, bid in enumerate(case.bus_ids)}
    for ln in case.lines:
        i, j = pos[ln.from_bus], pos[ln.to_bus]
        y = 1.0 / complex(ln.r, ln.x)
        Y[i, i] += y + 0.5j * ln.b_shunt
        Y[j, j] += y + 0.5j * ln.b_shunt
        Y[i, j] -= y
        Y[j, i] -= y
    return Y.real.copy(), Y.imag.copy()


@dataclass(frozen=True)
class IoSchema:
    """Model input/output layout for one case.

    Inputs  x = [p_g at non-slack generators | p_load | p_res], each block in
    ascending bus order.  Outputs y = [v at demand-carrying non-generator
    buses | q_g per generator | apparent line flow per line (case order)].
    """

    input_names: tuple[str, ...]
    output_names: tuple[str, ...]
    gen_input_idx: tuple[int, ...]   # generator indices feeding the p_g block
    load_bus_idx: tuple[int, ...]    # bus positions of the p_load block
    res_bus_idx: tuple[int, ...]     # bus positions of the p_res block
    v_bus_idx: tuple[int, ...]       # bus positions of the v output block
    qg_gen_idx: tuple[int, ...]      # generator indices of the q_g block

    @property
    def n_x(self) -> int:
        return len(self.input_names)

    @property
    def n_y(self) -> int:
        return len(self.output_names)

    @property
    def n_v(self) -> int:
        return len(self.v_bus_idx)

    @property
    def n_d(self) -> int:
        return len(self.load_bus_idx) + len(self.res_bus_idx)

    def column(self, name: str) -> int:
        try:
            return self.input_names.index(name)
        except ValueError:
            raise KeyError(f"unknown input column {name!r}") from None


def io_schema(case: GridCase) -> IoSchema:
    """Derive the deterministic input/output layout of a case."""
    order = case.gen_order()
    slack = case.slack_gen
    gen_input = tuple(k for k in order if k != slack)
    load_bus = tuple(i for i, b in enumerate(case.buses) if b.p_load > 0)
    res_bus = tuple(i for i, b in enumerate(case.buses) if b.p_res > 0)
    inj = sorted(set(load_bus) | set(res_bus)
                 | {i for i, b in enumerate(case.buses) if b.q_load != 0 or b.q_res != 0})
    v_bus = tuple(i for i in inj if case.buses[i].kind == "load")

    input_names = (
        [f"pg:{case.generators[k].bus}" for k in gen_input]
        + [f"pl:{case.buses[i].id}" for i in load_bus]
        + [f"pr:{case.buses[i].id}" for i in res_bus]
    )
    output_names = (
        [f"v:{case.buses[i].id}" for i in v_bus]
        + [f"qg:{case.generators[k].bus}" for k in order]
        + [f"s:{ln.from_bus}-{ln.to_bus}" for ln in case.lines]
    )
    return IoSchema(
        input_names=tuple(input_names),
        output_names=tuple(output_names),
        gen_input_idx=gen_input,
        load_bus_idx=load_bus,
        res_bus_idx=res_bus,
        v_bus_idx=v_bus,
        qg_gen_idx=tuple(order),
    )
