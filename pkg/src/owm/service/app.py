"""FastAPI service wrapping the core package.

The CLI talks to this app over an in-process ASGI transport by default; the
same app can be served standalone with uvicorn for remote clients.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..acceptance import ACCEPTANCE_CHECKS, EXPECTED_RED, run_acceptance
from ..algorithms import offline_opt_for_instance, run_online, trace_to_json
from ..bounds import (
    CoverBoundParams,
    budget_lp_from_instance,
    cover_value_bound,
    export_lp_text,
    harmonic_item_bound,
    harmonic_item_sum,
    solve_lp,
    staged_value_bound,
    value_envelope,
)
from ..harness import ExperimentSpec, run_experiment
from ..instances import (
    OnlineInstance,
    instance_from_json,
    instance_to_json,
    make_budget_block,
    make_budget_staged,
    make_cyclic_instance,
    make_iid_block,
    make_iid_instance,
    make_planted_cover_system,
    make_staged_instance,
    materialize_activity,
)
from ..valuations import ResourceLimitError
from . import schemas as sm


def build_family_instance(family: str, k: int, n: int, s: int, t: int,
                          draws: int, seed: int) -> OnlineInstance:
    if family == "budget-block":
        return make_budget_block()
    if family == "budget-staged":
        return make_budget_staged(t, seed)
    if family == "budget-iid":
        return make_iid_block(draws)
    base = make_cyclic_instance(make_planted_cover_system(k, n, s, seed))
    if family == "staged":
        return make_staged_instance(base, t, seed)
    if family == "iid":
        return make_iid_instance(base, t)
    raise ValueError(f"unknown family {family!r}")


def create_app() -> FastAPI:
    app = FastAPI(title="owm", version=__version__,
                  description="Online welfare maximization: instances, policies, "
                              "LP bounds, and a seeded verification harness.")

    @app.exception_handler(ValueError)
    async def _value_error(request, exc):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(ResourceLimitError)
    async def _resource_error(request, exc):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/health", response_model=sm.HealthResponse)
    def health():
        return sm.HealthResponse(version=__version__)

    @app.post("/instances/generate", response_model=sm.InstanceModel)
    def generate(req: sm.GenerateRequest):
        inst = build_family_instance(req.family, req.k, req.n, req.s, req.t,
                                     req.draws, req.seed)
        return instance_to_json(inst)

    @app.post("/lp/solve", response_model=sm.LpResponse)
    def lp_solve(req: sm.LpRequest):
        if req.target == "budget-block":
            inst = make_budget_block()
        elif req.target == "budget-staged":
            inst = make_budget_staged(req.t, req.seed)
        else:
            if req.instance is None:
                raise ValueError("target 'instance' needs an instance body")
            inst = instance_from_json(req.instance.to_dict())
        deact = materialize_activity(inst, np.random.default_rng([req.seed, 0]))
        model = budget_lp_from_instance(inst, deact)
        sol = solve_lp(model.lp)
        return sm.LpResponse(
            value=sol.objective, status=sol.status, residual=sol.residual,
            iterations=sol.iterations, num_vars=model.lp.num_vars,
            num_rows=model.lp.num_rows,
            export_text=export_lp_text(model.lp) if req.export else None)

    @app.post("/bounds/staged-integral", response_model=sm.StagedBoundResponse)
    def staged_integral(req: sm.StagedBoundRequest):
        b = staged_value_bound(req.t)
        return sm.StagedBoundResponse(
            t=b.t, discrete_sum=b.discrete_sum, pair_discrete_sum=b.pair_discrete_sum,
            integral_value=b.integral_value, integral_quadrature=b.integral_quadrature,
            ratio=b.ratio, below_0612=b.ratio < 0.612)

    @app.post("/bounds/harmonic", response_model=sm.HarmonicResponse)
    def harmonic(req: sm.HarmonicRequest):
        return sm.HarmonicResponse(bound=harmonic_item_bound(req.m, req.t, req.j),
                                   exact_sum=harmonic_item_sum(req.m, req.t, req.j))

    @app.post("/bounds/envelope", response_model=sm.EnvelopeResponse)
    def envelope(req: sm.EnvelopeRequest):
        return sm.EnvelopeResponse(value=value_envelope(req.x))

    @app.post("/bounds/cover", response_model=sm.CoverBoundResponse)
    def cover(req: sm.CoverBoundRequest):
        params = CoverBoundParams(req.k, req.epsilon, req.c0, req.universe_size)
        curves = cover_value_bound(params, req.ell, req.mu)
        return sm.CoverBoundResponse(raw=curves.raw, smooth=curves.smooth,
                                     tangent=curves.tangent)

    @app.post("/runs/execute", response_model=sm.RunResponse)
    def execute(req: sm.RunRequest):
        if req.instance is not None:
            inst = instance_from_json(req.instance.to_dict())
        elif req.family is not None:
            inst = build_family_instance(req.family, req.k, req.n, req.s, req.t,
                                         req.draws, req.seed)
        else:
            raise ValueError("run needs either an instance body or a family")

        if req.policy == "bruteforce":
            alloc, opt = offline_opt_for_instance(inst, seed=req.seed)
            deact = materialize_activity(inst, np.random.default_rng(req.seed))
            return sm.RunResponse(
                policy="bruteforce", welfare=opt,
                per_agent_value=[inst.agents[a].value(b)
                                 for a, b in enumerate(alloc.bundles)],
                per_agent_items=[b.size() for b in alloc.bundles],
                deact_stage=[int(x) for x in deact])

        trace = run_online(inst, req.policy, seed=req.seed,
                           record_steps=req.include_steps)
        d = trace_to_json(trace)
        return sm.RunResponse(
            policy=req.policy, welfare=d["welfare"],
            per_agent_value=d["per_agent_value"],
            per_agent_items=d["per_agent_items"],
            deact_stage=d["deact_stage"],
            steps=[sm.StepModel(**s) for s in d["steps"]] if req.include_steps else None)

    @app.post("/experiments/run", response_model=sm.ExperimentResponse)
    def experiment(req: sm.ExperimentRequest):
        spec = ExperimentSpec(
            family=req.family, policy=req.policy, trials=req.trials, seed=req.seed,
            baseline=req.baseline, k=req.k, n=req.n, s=req.s, t=req.t,
            draws=req.draws, known_value=req.known_value, threads=req.threads,
            claim_checks=list(req.claim_checks))
        return run_experiment(spec).to_json()

    @app.post("/verify/run", response_model=sm.VerifyResponse)
    def verify(req: sm.VerifyRequest):
        names = req.checks
        if names is not None:
            unknown = [n for n in names if n not in ACCEPTANCE_CHECKS]
            if unknown:
                raise ValueError(f"unknown checks: {unknown}; available: "
                                 f"{tuple(ACCEPTANCE_CHECKS)}")
        results = run_acceptance(names, scale=req.scale, seed=req.seed,
                                 threads=req.threads)
        return sm.VerifyResponse(
            results=[sm.CriterionModel(**r.to_json()) for r in results],
            all_passed=all(r.passed for r in results),
            expected_red=[n for n in EXPECTED_RED
                          if names is None or n in names])

    return app
