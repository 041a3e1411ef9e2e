import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

import math

from config import DATA_DIR
from data_io import read_kusuoka, read_partition, read_scenarios
from distributions import exp_truncation_family, exponential, neg_exponential
from duality import es_dual_eval, extend_by_condexp
from harness import coex_probe
from orlicz import exp_minus_one, luxemburg_norm
from risk import counterexample_rho, es, es_measure, kusuoka_eval, var

CHECKS = []


def check(label: str, computed: float, expected: float, tol: float = 1e-12):
    ok = abs(computed - expected) <= tol
    CHECKS.append(ok)
    print(f"{'PASS' if ok else 'FAIL'}  {label}: {computed:.17g} (expected {expected:.17g})")


def main():
    print("=" * 60)
    print("Orlicz Risk Desk - worked fixtures")
    print("=" * 60)

    X = read_scenarios(DATA_DIR / "portfolio.csv")
    print("\n[Step 1/4] VaR / ES on the 4-atom portfolio...")
    check("VaR_0.25", var(X, 0.25), 5.0)
    check("VaR_0.5", var(X, 0.5), 0.0)
    check("ES_0.5", es(X, 0.5), 7.5)
    check("ES_0.25", es(X, 0.25), 10.0)
    check("ES_1", es(X, 1.0), 2.5)
    check("ES_0.5 dual", es_dual_eval(X, 0.5).value, 7.5, 1e-9)
    check("Kusuoka", kusuoka_eval(X, read_kusuoka(DATA_DIR / "kusuoka.csv")), 6.5)

    print("\n[Step 2/4] Conditional-expectation decay...")
    chain = [read_partition(DATA_DIR / "partitions" / f"{name}.csv", X.n) for name in ("trivial", "pairs", "singletons")]
    trace = coex_probe(X, read_scenarios(DATA_DIR / "weights.csv"), chain)
    for k, expected in enumerate((5.0, 2.5, 0.0)):
        check(f"coex[{k}]", trace.values[k], expected)

    print("\n[Step 3/4] Orlicz norm and counterexample...")
    phi = exp_minus_one()
    check("||Exp(1)||", luxemburg_norm(exponential(1.0), phi), 2.0, 1e-6)
    sequence, _ = exp_truncation_family(10, shift=1.0)
    for n in (1, 2, 5, 10):
        check(f"rho(X_{n})", counterexample_rho(sequence[n - 1], phi), -math.exp(-n), 1e-6)

    print("\n[Step 4/4] Extension of ES_0.5 to -Exp(1)...")
    ext = extend_by_condexp(es_measure(0.5), neg_exponential(1.0), phi, 12)
    check("ES_0.5 extension", ext.values[-1], 1.0 + math.log(2.0), 1e-3)

    print("\n" + "=" * 60)
    print(f"{sum(CHECKS)}/{len(CHECKS)} fixtures reproduced")
    print("=" * 60)
    return 0 if all(CHECKS) else 1


if __name__ == "__main__":
    sys.exit(main())
