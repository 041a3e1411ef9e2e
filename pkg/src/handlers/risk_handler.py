from typing import Dict, List, Sequence

import pandas as pd

from distributions import AtomicRV, RandomVariable
from orlicz import OrliczFunction
from risk import RiskMeasure, counterexample_evidence, counterexample_rho, mixture_value


class RiskHandler:
    """Single evaluations of VaR, ES, Kusuoka mixtures and the counterexample measure."""

    def evaluate(self, command: str, rho: RiskMeasure, X: AtomicRV) -> Dict:
        payload = {"command": command, "measure": rho.name, "atoms": X.n, "value": rho(X)}
        if rho.spec is not None:
            # per-candidate terms of the Kusuoka supremum
            payload["candidates"] = {
                c.candidate_id: mixture_value(X, c.alphas, c.weights) - c.gamma
                for c in rho.spec.effective
            }
        return payload

    def counterexample(self, X: RandomVariable, phi: OrliczFunction) -> Dict:
        evidence = counterexample_evidence(X, phi)
        return {
            "command": "counterexample",
            "phi": phi.name,
            "shift": evidence.shift,
            "in_heart": evidence.in_heart,
            "value": evidence.value,
        }

    def counterexample_trace(
        self, sequence: Sequence[RandomVariable], limit: RandomVariable, phi: OrliczFunction
    ) -> Dict:
        """rho(X_1), ..., rho(X_n) followed by rho(limit)."""
        values: List[float] = [counterexample_rho(Xn, phi) for Xn in sequence]
        return {
            "command": "counterexample",
            "phi": phi.name,
            "depths": list(range(1, len(values) + 1)),
            "values": values,
            "limit": counterexample_rho(limit, phi),
        }

    def trace_frame(self, payload: Dict) -> pd.DataFrame:
        return pd.DataFrame({"depth": payload["depths"], "value": payload["values"]})
