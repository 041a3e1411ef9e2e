from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from distributions import AtomicRV, RandomVariable, Scheme
from harness import (
    ProbeReport,
    blowup_report,
    check_axioms,
    coex_report,
    dilatation_probe,
    extension_gap_probe,
    fatou_probe,
    fatou_sequence_probe,
    norm_lsc_probe,
    random_population,
)
from orlicz import OrliczFunction
from partitions import Partition, random_partition
from risk import RiskMeasure


class ProbeHandler:
    """Runs one harness probe and flattens its report into a payload."""

    def payload(self, report: ProbeReport) -> Dict:
        return {"command": "probe", **report.model_dump()}

    def frame(self, payload: Dict) -> Optional[pd.DataFrame]:
        values = payload.get("values")
        if not isinstance(values, list):
            return None
        return pd.DataFrame({"index": list(range(len(values))), "value": list(values)})

    def axioms(
        self,
        rho: RiskMeasure,
        X: Optional[AtomicRV],
        count: int,
        trials: int,
        seed: int = 0,
        properties: Optional[Sequence[str]] = None,
        threads: int = 1,
        witness_dir: Optional[Path] = None,
    ) -> Dict:
        population: List[AtomicRV] = [X] if X is not None else []
        population += random_population(count, seed, n=X.n if X is not None else None)
        report = check_axioms(rho, population, seed, trials, properties, threads, witness_dir)
        return self.payload(report)

    def fatou(
        self,
        rho: RiskMeasure,
        X: AtomicRV,
        schemes: Sequence[str],
        count: int,
        repeats: int = 1,
        seed: int = 0,
        threads: int = 1,
    ) -> Dict:
        report = fatou_probe(rho, X, [Scheme(s) for s in schemes], seed, count, repeats, threads)
        return self.payload(report)

    def fatou_sequence(
        self,
        rho: RiskMeasure,
        sequence: Sequence[RandomVariable],
        limit: RandomVariable,
        seed: int = 0,
        threads: int = 1,
    ) -> Dict:
        report = fatou_sequence_probe(rho, sequence, limit, seed, name=f"fatou:{rho.name}", threads=threads)
        return self.payload(report)

    def lsc(self, rho: RiskMeasure, X: RandomVariable, phi: OrliczFunction, count: int, seed: int = 0) -> Dict:
        return self.payload(norm_lsc_probe(rho, X, phi, count, seed))

    def dilatation(
        self, rho: RiskMeasure, X: AtomicRV, partitions: Sequence[Partition], count: int, seed: int = 0
    ) -> Dict:
        """Given partitions, or `count` random ones drawn from the seed when none are given."""
        if not partitions:
            rng = np.random.default_rng(seed)
            partitions = [random_partition(X.n, rng) for _ in range(count)]
        return self.payload(dilatation_probe(rho, X, partitions, seed))

    def coex(self, X: AtomicRV, Y: AtomicRV, chain: Sequence[Partition], seed: int = 0) -> Dict:
        return self.payload(coex_report(X, Y, chain, seed))

    def blowup(
        self, X: RandomVariable, levels: int, trials: int, tail_levels: Sequence[float], seed: int = 0
    ) -> Dict:
        return self.payload(blowup_report(X, levels, trials, tail_levels, seed))

    def extension_gap(
        self, rho: RiskMeasure, X: RandomVariable, phi: OrliczFunction, depth: int, seed: int = 0
    ) -> Dict:
        return self.payload(extension_gap_probe(rho, X, phi, depth, seed))
