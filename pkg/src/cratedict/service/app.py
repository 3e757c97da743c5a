"""HTTP facade over the dictionaries, filters, and the experiment harness.

Structures live in process memory behind opaque ids.  Every instance owns
a lock, so concurrent requests against one structure serialize while
independent structures proceed in parallel.  Experiment endpoints are
stateless: they build, measure, and discard their own instances and
return the harness report verbatim.
"""

from __future__ import annotations

import secrets
import threading
from contextlib import contextmanager

from fastapi import FastAPI, HTTPException

from ..core_bits import AccessMeter
from ..errors import CapacityError, ComponentOverflow, ConstructionFailure
from ..filter import CrateFilter
from ..oracle_harness import (
    DictConfig,
    Workload,
    measure_access,
    measure_fp,
    retrieval_experiment,
    run_differential,
    seed_bytes,
    space_audit,
)
from ..retrieval import RetrievalStructure
from .models import (
    DENSE_REFERENCE,
    SPARSE_REFERENCE,
    AccessTraceRequest,
    CountResult,
    Created,
    DictCreate,
    DiffTestRequest,
    ElementOp,
    FilterCreate,
    FpRateRequest,
    LabelResult,
    LabelUpdate,
    LiveResult,
    MemberResult,
    OkResult,
    RetrievalCreate,
    RetrievalRequest,
    SpaceAuditRequest,
)


class _Instance:
    __slots__ = ("obj", "kind", "lock")

    def __init__(self, obj, kind: str):
        self.obj = obj
        self.kind = kind
        self.lock = threading.Lock()


@contextmanager
def _translated():
    """Map package exceptions onto HTTP status codes."""
    try:
        yield
    except KeyError as exc:
        raise HTTPException(404, f"element not present: {exc.args[0]}")
    except (CapacityError, ComponentOverflow, ConstructionFailure) as exc:
        raise HTTPException(409, str(exc))
    except ValueError as exc:  # includes ConfigError
        raise HTTPException(400, str(exc))


def _dict_info(obj) -> dict:
    p = obj.params
    return {"live": len(obj), "mode": p.mode, "n": p.n, "universe": p.universe,
            "w_eff": p.w_eff, "ell": p.ell, "metered": obj.meter is not None}


def _filter_info(obj) -> dict:
    info = _dict_info(obj)
    info["epsilon"] = float(obj.epsilon)
    return info


def _retrieval_info(obj) -> dict:
    return {"live": obj.live, "n": obj.n, "k": obj.k,
            "variant": obj.variant, "attempts": obj.attempts,
            "metered": obj.meter is not None}


def create_app() -> FastAPI:
    app = FastAPI(title="cratedict", description=__doc__)
    instances: dict[str, _Instance] = {}
    registry_lock = threading.Lock()

    def register(obj, kind: str) -> str:
        iid = secrets.token_hex(8)
        with registry_lock:
            instances[iid] = _Instance(obj, kind)
        return iid

    def fetch(kind: str, iid: str) -> _Instance:
        with registry_lock:
            inst = instances.get(iid)
        if inst is None or inst.kind != kind:
            raise HTTPException(404, f"no {kind} instance {iid!r}")
        return inst

    def evict(kind: str, iid: str) -> None:
        with registry_lock:
            inst = instances.get(iid)
            if inst is None or inst.kind != kind:
                raise HTTPException(404, f"no {kind} instance {iid!r}")
            del instances[iid]

    def meter_snapshot(inst: _Instance) -> dict:
        meter = inst.obj.meter
        if meter is None:
            return {"metered": False}
        snap = meter.snapshot()
        snap["metered"] = True
        return snap

    @app.get("/healthz")
    def healthz() -> dict:
        with registry_lock:
            return {"ok": True, "instances": len(instances)}

    # -- dictionaries -----------------------------------------------------------

    @app.post("/dicts", response_model=Created, status_code=201)
    def create_dict(req: DictCreate):
        with _translated():
            cfg = DictConfig(req.n, req.rho, universe=req.universe,
                             w_eff=req.w_eff, seed=req.seed,
                             permute=req.permute, overrides=req.overrides)
            obj = cfg.build(AccessMeter() if req.metered else None)
        return Created(id=register(obj, "dict"), kind=obj.KIND,
                       info=_dict_info(obj))

    @app.get("/dicts/{iid}")
    def dict_status(iid: str) -> dict:
        inst = fetch("dict", iid)
        with inst.lock:
            return {"id": iid, "kind": inst.obj.KIND,
                    "info": _dict_info(inst.obj),
                    "space": inst.obj.space_report()}

    @app.post("/dicts/{iid}/insert", response_model=LiveResult)
    def dict_insert(iid: str, op: ElementOp):
        inst = fetch("dict", iid)
        with inst.lock, _translated():
            inst.obj.insert(op.x)
            return LiveResult(live=len(inst.obj))

    @app.post("/dicts/{iid}/delete", response_model=LiveResult)
    def dict_delete(iid: str, op: ElementOp):
        inst = fetch("dict", iid)
        with inst.lock, _translated():
            inst.obj.delete(op.x)
            return LiveResult(live=len(inst.obj))

    @app.post("/dicts/{iid}/query", response_model=CountResult)
    def dict_query(iid: str, op: ElementOp):
        inst = fetch("dict", iid)
        with inst.lock, _translated():
            return CountResult(count=inst.obj.query(op.x))

    @app.post("/dicts/{iid}/check", response_model=OkResult)
    def dict_check(iid: str):
        inst = fetch("dict", iid)
        meter = inst.obj.meter
        with inst.lock:
            if meter is None:
                inst.obj.check_invariants()
            else:
                with meter.pause():
                    inst.obj.check_invariants()
        return OkResult()

    @app.get("/dicts/{iid}/meter")
    def dict_meter(iid: str) -> dict:
        inst = fetch("dict", iid)
        with inst.lock:
            return meter_snapshot(inst)

    @app.delete("/dicts/{iid}", status_code=204)
    def dict_drop(iid: str) -> None:
        evict("dict", iid)

    # -- filters ----------------------------------------------------------------

    @app.post("/filters", response_model=Created, status_code=201)
    def create_filter(req: FilterCreate):
        with _translated():
            obj = CrateFilter(req.n, req.epsilon, req.w_eff,
                              seed=seed_bytes(req.seed),
                              meter=AccessMeter() if req.metered else None)
        return Created(id=register(obj, "filter"), kind=obj.KIND,
                       info=_filter_info(obj))

    @app.get("/filters/{iid}")
    def filter_status(iid: str) -> dict:
        inst = fetch("filter", iid)
        with inst.lock:
            return {"id": iid, "kind": inst.obj.KIND,
                    "info": _filter_info(inst.obj),
                    "space": inst.obj.space_report()}

    @app.post("/filters/{iid}/insert", response_model=LiveResult)
    def filter_insert(iid: str, op: ElementOp):
        inst = fetch("filter", iid)
        with inst.lock, _translated():
            inst.obj.insert(op.x)
            return LiveResult(live=len(inst.obj))

    @app.post("/filters/{iid}/delete", response_model=LiveResult)
    def filter_delete(iid: str, op: ElementOp):
        inst = fetch("filter", iid)
        with inst.lock, _translated():
            inst.obj.delete(op.x)
            return LiveResult(live=len(inst.obj))

    @app.post("/filters/{iid}/query", response_model=MemberResult)
    def filter_query(iid: str, op: ElementOp):
        inst = fetch("filter", iid)
        with inst.lock, _translated():
            return MemberResult(member=inst.obj.query(op.x))

    @app.get("/filters/{iid}/meter")
    def filter_meter(iid: str) -> dict:
        inst = fetch("filter", iid)
        with inst.lock:
            return meter_snapshot(inst)

    @app.delete("/filters/{iid}", status_code=204)
    def filter_drop(iid: str) -> None:
        evict("filter", iid)

    # -- retrieval tables -------------------------------------------------------

    @app.post("/retrievals", response_model=Created, status_code=201)
    def create_retrieval(req: RetrievalCreate):
        with _translated():
            obj = RetrievalStructure.build(
                req.keys, req.labels, k=req.k, w_eff=req.w_eff,
                seed=seed_bytes(req.seed), retries=req.retries,
                meter=AccessMeter() if req.metered else None)
        return Created(id=register(obj, "retrieval"), kind=obj.KIND,
                       info=_retrieval_info(obj))

    @app.get("/retrievals/{iid}")
    def retrieval_status(iid: str) -> dict:
        inst = fetch("retrieval", iid)
        with inst.lock:
            return {"id": iid, "kind": inst.obj.KIND,
                    "info": _retrieval_info(inst.obj),
                    "space": inst.obj.space_report()}

    @app.post("/retrievals/{iid}/query", response_model=LabelResult)
    def retrieval_query(iid: str, op: ElementOp):
        inst = fetch("retrieval", iid)
        with inst.lock, _translated():
            return LabelResult(label=inst.obj.query(op.x))

    @app.post("/retrievals/{iid}/update", response_model=LabelResult)
    def retrieval_update(iid: str, op: LabelUpdate):
        inst = fetch("retrieval", iid)
        with inst.lock, _translated():
            inst.obj.update(op.x, op.label)
            return LabelResult(label=op.label)

    @app.get("/retrievals/{iid}/meter")
    def retrieval_meter(iid: str) -> dict:
        inst = fetch("retrieval", iid)
        with inst.lock:
            return meter_snapshot(inst)

    @app.delete("/retrievals/{iid}", status_code=204)
    def retrieval_drop(iid: str) -> None:
        evict("retrieval", iid)

    # -- experiments ------------------------------------------------------------

    @app.post("/experiments/diff-test")
    def diff_test(req: DiffTestRequest) -> dict:
        base = DENSE_REFERENCE if req.layout == "dense" else SPARSE_REFERENCE
        n = req.n or base["n"]
        rho = req.rho
        if rho is None and req.universe is None:
            rho = base["rho"]
        w_eff = req.w_eff or base["w_eff"]
        with _translated():
            cfg = DictConfig(n, rho, universe=req.universe, w_eff=w_eff,
                             seed=req.seed, overrides=req.overrides)
            params = cfg.params()
            if params.mode != req.layout:
                raise HTTPException(
                    400, f"requested {req.layout} but the geometry derives "
                    f"{params.mode}; adjust rho or w_eff")
            wl = Workload(ops=req.ops, universe=params.universe, capacity=n,
                          seed=req.seed, mode=req.mode, weights=req.weights)
            return run_differential(wl, cfg,
                                    invariants_every=req.invariants_every,
                                    minimality_every=req.minimality_every)

    @app.post("/experiments/fp-rate")
    def fp_rate(req: FpRateRequest) -> dict:
        with _translated():
            return measure_fp(req.n, req.epsilon, req.queries, req.seeds,
                              w_eff=req.w_eff)

    @app.post("/experiments/space-audit")
    def space(req: SpaceAuditRequest) -> dict:
        with _translated():
            cfg = DictConfig(req.n, req.rho, universe=req.universe,
                             w_eff=req.w_eff)
            return space_audit(cfg, fill=req.fill)

    @app.post("/experiments/access-trace")
    def access_trace(req: AccessTraceRequest) -> dict:
        with _translated():
            cfg = DictConfig(req.n, req.rho, universe=req.universe,
                             w_eff=req.w_eff, permute=False)
            return measure_access(cfg, ops=req.ops, seed=req.seed,
                                  weights=req.weights, prologue=req.prologue)

    @app.post("/experiments/retrieval")
    def retrieval_run(req: RetrievalRequest) -> dict:
        with _translated():
            return retrieval_experiment(req.n, req.k, req.seed,
                                        w_eff=req.w_eff, retries=req.retries)

    return app


app = create_app()
