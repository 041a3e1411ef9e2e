from typing import Dict, Sequence, Tuple

import pandas as pd

from data_io import trace_frame
from distributions import AtomicRV, RandomVariable
from duality import (
    Density,
    biconjugate_check,
    boundary_samples,
    es_dual_eval,
    extend_by_condexp,
    fenchel_conjugate,
    gamma_from_rho,
)
from orlicz import OrliczFunction
from risk import RiskMeasure


class DualityHandler:
    """Dual side of the risk measures: conjugates, densities, penalties and extensions."""

    def es_dual(self, X: AtomicRV, alpha: float) -> Dict:
        report = es_dual_eval(X, alpha)
        return {
            "command": "dual",
            "method": report.method.value,
            "alpha": alpha,
            "value": report.value,
            "density": report.witness.z,
        }

    def conjugate(
        self, rho: RiskMeasure, Z: AtomicRV, candidates: Sequence[AtomicRV] = (), threads: int = 1
    ) -> Dict:
        report = fenchel_conjugate(rho, Z, candidates=candidates, threads=threads)
        return {
            "command": "dual",
            "measure": rho.name,
            "method": report.method.value,
            "value": report.value,
            "lower_bound": report.lower_bound,
            "diverged": report.diverged,
            "summary": report.describe(),
            "witness": report.witness.values,
        }

    def biconjugate(
        self, rho: RiskMeasure, X: AtomicRV, densities: Sequence[Density], threads: int = 1
    ) -> Dict:
        result = biconjugate_check(rho, X, densities, threads)
        return {
            "command": "dual",
            "measure": rho.name,
            "primal": result.primal,
            "lower": result.lower,
            "gap": result.gap,
            "terms": list(result.terms),
        }

    def gamma(
        self,
        rho: RiskMeasure,
        mu: Tuple[Sequence[float], Sequence[float]],
        n: int,
        count: int,
        seed: int = 0,
        threads: int = 1,
    ) -> Dict:
        samples = boundary_samples(rho, n, count, seed)
        value = gamma_from_rho(rho, mu, samples, threads)
        return {
            "command": "dual",
            "measure": rho.name,
            "alphas": list(mu[0]),
            "weights": list(mu[1]),
            "samples": len(samples),
            "gamma_lower_bound": value,
        }

    def extend(
        self, rho: RiskMeasure, X: RandomVariable, phi: OrliczFunction, depth: int, threads: int = 1
    ) -> Dict:
        trace = extend_by_condexp(rho, X, phi, depth, threads)
        return {
            "command": "extend",
            "measure": rho.name,
            "phi": phi.name,
            "depths": list(trace.depths),
            "values": list(trace.values),
            "stabilized": trace.stabilized,
        }

    def trace_frame(self, payload: Dict) -> pd.DataFrame:
        return trace_frame(payload["depths"], payload["values"], payload["stabilized"])
