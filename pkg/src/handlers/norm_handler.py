from dataclasses import asdict
from typing import Dict, Sequence

import pandas as pd

from distributions import AtomicRV, RandomVariable
from orlicz import (
    OrliczFunction,
    check_orlicz_function,
    conjugate,
    delta2_probe,
    heart_membership_probe,
    luxemburg_norm,
    orlicz_norm,
)


def _label(X: RandomVariable) -> str:
    return X.digest() if isinstance(X, AtomicRV) else X.label


class NormHandler:
    """Orlicz functions: norms, conjugates, heart membership and axiom diagnostics."""

    def norm(self, X: RandomVariable, phi: OrliczFunction, amemiya: bool = False) -> Dict:
        """Luxemburg norm, plus the Orlicz (Amemiya) norm on atomic inputs when asked."""
        value = luxemburg_norm(X, phi)
        payload = {"command": "norm", "phi": phi.name, "input": _label(X), "value": value}
        if amemiya:
            if not isinstance(X, AtomicRV):
                raise ValueError("the Orlicz norm is evaluated on scenario inputs only")
            payload["orlicz_norm"] = orlicz_norm(X, phi)
        return payload

    def conjugate(self, phi: OrliczFunction, points: Sequence[float]) -> Dict:
        values = [conjugate(phi, s) for s in points]
        return {
            "command": "conjugate",
            "phi": phi.name,
            "closed_form": phi.has_closed_conjugate,
            "points": list(points),
            "values": values,
        }

    def conjugate_frame(self, payload: Dict) -> pd.DataFrame:
        return pd.DataFrame({"s": payload["points"], "psi": payload["values"]})

    def heart(self, X: RandomVariable, phi: OrliczFunction, lambdas: Sequence[float]) -> Dict:
        report = heart_membership_probe(X, phi, lambdas)
        return {
            "command": "probe",
            "probe_name": "heart",
            "phi": phi.name,
            "input": _label(X),
            "in_heart": report.in_heart,
            "verdicts": report.verdicts,
            "values": report.values,
        }

    def delta2(self, phi: OrliczFunction, seed: int = 0) -> Dict:
        result = delta2_probe(phi)
        check = check_orlicz_function(phi, seed)
        return {
            "command": "probe",
            "probe_name": "delta2",
            "phi": phi.name,
            "holds": result.holds,
            "k": result.k,
            "provenance": result.provenance,
            "orlicz_axioms": {**asdict(check), "valid": check.valid},
        }
