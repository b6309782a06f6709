# %% [markdown]
# # From many apps to a few threat profiles
#
# This demo writes a synthetic corpus, runs the file-based pipeline over it
# and then groups the apps by what their misuses leak to. Every step is the
# same code the `cryptorisk` command runs.

# %%
import tempfile
from pathlib import Path

from cryptorisk import pipeline
from cryptorisk.fleet import cluster_apps, feature_matrix, mine_rules, sweep_k, transactions_from_nu
from cryptorisk.synth import make_corpus

root = Path(tempfile.mkdtemp(prefix="cryptorisk-demo-"))
layout = make_corpus(root / "corpus", n_apps=60, seed=4)
pipeline.run_detect(layout.programs, root / "det", layout.reports)
reports = pipeline.run_assess(layout.programs, root / "det", root / "risk")
print(pipeline.summarize(reports)[:900])

# %% [markdown]
# ## Feature vectors
#
# Each app becomes 231 numbers: 42 zero/one entries for which of CG and CC
# reported each type, and 189 flow counts, one per (type, sink category).

# %%
ids, X = feature_matrix(reports)
print(X.shape, "non-zero columns:", int((X.sum(axis=0) > 0).sum()))

# %% [markdown]
# ## Choosing k
#
# Lower Davies-Bouldin values mean tighter, better separated clusters. The
# sweep also counts how many distinct top labels the clusters get, which
# says whether extra clusters describe new threats or split old ones.

# %%
for row in sweep_k(reports, range(2, 9), seed=0):
    print(row)

# %%
res = cluster_apps(reports, 4, seed=0)
for s in res.summaries:
    labels = ", ".join(f"{l.vuln_id}->{l.category} ({l.percent:.0f}%)" for l in s.labels)
    print(f"c{s.cluster_id}: {len(s.members):>3} apps, median R_x {s.risk['median']:.0f}: {labels}")

# %% [markdown]
# ## Labels that travel together
#
# Association rules over the per-app label sets. The production thresholds
# (more than 500 apps, confidence above 0.8) are far beyond this corpus, so
# they are scaled down here.

# %%
rules = mine_rules(transactions_from_nu(X), min_support_apps=3, min_conf=0.6)
for r in rules[:10]:
    print(r.to_row())
print(f"DBI at k=4: {res.dbi:.3f}")
