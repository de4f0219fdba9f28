"""Cluster synthetic citations with the split-merge proposer.

Generates noisy citation strings from the bundled citation model, runs one
chain, and compares the recovered clusters with the generating ones.

    python3 demos/citation_matching.py [n_citations] [samples]
"""

import sys

from blogmh.citebench import citation_model, generate_synthetic, run_citebench

n = int(sys.argv[1]) if len(sys.argv) > 1 else 60
samples = int(sys.argv[2]) if len(sys.argv) > 2 else 5_000

dataset = generate_synthetic(citation_model(n, eps=0.05), n, seed=0)
print(f"{len(dataset)} citations from {len(dataset.gold_partition())} publications, for example:")
for rec in dataset.records[:3]:
    print(f"  [{rec.gold}] {rec.text}")

report = run_citebench(dataset, samples=samples, seed=0)
print(f"log-probability {report.log_prob_initial:.1f} -> {report.log_prob_final:.1f}")
print(f"cluster accuracy: final state {report.accuracy_final:.3f}, "
      f"averaged over samples {report.accuracy_avg:.3f}")
print(f"acceptance rate {report.acceptance_rate:.3f}, sampling took {report.wall_ms / 1e3:.1f}s")
for cls, d in report.factor_evals_by_class.items():
    print(f"  {cls:>16}: {d['steps']:>5} steps, {d['factor_evals'] / max(d['steps'], 1):.1f} factor evals each")
