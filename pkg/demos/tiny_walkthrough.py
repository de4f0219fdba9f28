"""Walk through the two-publication model end to end.

Parses the bundled model, computes the exact posterior by enumeration, then
estimates the same probability with the generic Metropolis-Hastings proposer
and prints how the estimate settles as the chain grows.

    python3 demos/tiny_walkthrough.py
"""

from importlib import resources

from blogmh import parse_model
from blogmh.engine import Engine, parse_evidence_queries
from blogmh.oracle import exact_posterior, load_bounds
from blogmh.proposers import GenericResample

data = resources.files("blogmh") / "data"
model = parse_model((data / "tiny.blog").read_text(encoding="utf-8"))
with resources.as_file(data / "tiny.bounds") as p:
    bounds = load_bounds(p)

evidence, queries = parse_evidence_queries(model, "Obs(C1) = true\nquery hot : Hot(PubCited(C1))\n")
exact = exact_posterior(model, bounds, evidence, queries[0].term)
print(f"exact P(Hot(PubCited(C1)) | Obs(C1)) = {exact:.6f}")

engine = Engine(model, evidence, queries, GenericResample(), seed=0)
done = 0
for n in (1_000, 10_000, 50_000):
    stats = engine.run(n - done)
    done = n
    print(f"after {n:>6} samples: estimate {stats.estimates['hot']:.4f}, "
          f"acceptance {stats.acceptance_rate:.2f}")

print("final state:")
for var, val in sorted(engine.world.values.items(), key=repr):
    print(f"  {var!r} = {val!r}")
