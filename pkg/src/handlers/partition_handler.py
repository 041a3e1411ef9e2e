from typing import Dict, Optional

from distributions import AtomicRV, RandomVariable
from orlicz import OrliczFunction, luxemburg_norm
from partitions import Partition, cecon_sequence, cond_exp


class PartitionHandler:
    """Conditional expectations on scenario partitions and level partitions of quantile inputs."""

    def condexp(self, X: AtomicRV, pi: Partition, phi: Optional[OrliczFunction] = None) -> Dict:
        Y = cond_exp(X, pi)
        payload = {"command": "condexp", "blocks": len(pi.blocks), "values": Y.values}
        if phi is not None:
            payload["phi"] = phi.name
            payload["norm_input"] = luxemburg_norm(X, phi)
            payload["norm_condexp"] = luxemburg_norm(Y, phi)
        return payload

    def levels(self, X: RandomVariable, phi: OrliczFunction, depth: int) -> Dict:
        """Summary of the nested level partitions used by the extension."""
        cells = cecon_sequence(X, phi, depth)
        return {
            "command": "condexp",
            "phi": phi.name,
            "depths": [c.depth for c in cells],
            "cells": [c.cells for c in cells],
            "thresholds": [c.threshold for c in cells],
            "tail_mass": [c.tail_mass for c in cells],
            "nested": all(fine.refines(coarse) for coarse, fine in zip(cells, cells[1:])),
        }
