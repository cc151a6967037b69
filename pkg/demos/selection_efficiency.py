# %% [markdown]
# # How many relevance-model calls does a turn cost?
#
# A cross-encoder scores one (context, candidate) pair per call, so the
# cost of knowledge selection is the number of calls per turn.  Flat
# ranking scores every document; the hierarchical variants first pick an
# entity (or a domain and then an entity) and only score the documents
# under it; a bi-encoder embeds the context once and looks the documents
# up in a precomputed index.
#
# The counting wrappers in `docdial.bench` make these numbers exact for any
# scorer, so we can read the mechanism straight off a synthetic knowledge
# base with 4 domains, 10 entities per domain and 5 documents per entity.

# %%
from docdial.bench import bench_selection, synthetic_kb
from docdial.kb import Speaker, Turn

kb = synthetic_kb(domains=4, entities=10, docs=5)
contexts = [[Turn(Speaker.USER, d.question)] for d in list(kb)[::7]]
print(f"{len(kb)} documents, {len(kb.entities())} entities, {len(contexts)} probe turns")

# %% [markdown]
# With the threshold at 1.0 the beam keeps only entities tied with the best
# one.  Greedy keeps exactly one, so the two differ only when the scorer
# produces ties, which the word-overlap scorer used here does quite often.

# %%
report = bench_selection(kb, contexts, threshold=1.0)
for name, stats in report.strategies.items():
    calls = stats.mean_scorer_calls + stats.mean_embed_calls
    print(f"{name:>14}: {calls:6.1f} calls/turn  ({report.speedup(name):5.1f}x fewer than flat)")
print(f"bi-encoder index build (one-off): {report.index_embed_calls} document embeddings")

# %% [markdown]
# Closed forms: flat costs D*E*K = 200, greedy costs D*E + K = 45, the
# three-stage cascade costs D + E + K = 19 and the bi-encoder needs a
# single context embedding.
#
# Lowering the beam threshold lets more entities survive, which buys recall
# with extra document calls.  The lexical reference scorer below is only a
# stand-in for a trained model, but the accounting is the same.

# %%
for t in (1.0, 0.9, 0.7, 0.5, 0.2):
    r = bench_selection(kb, contexts, ["beam"], threshold=t)
    print(f"t={t:.1f}: {r.strategies['beam'].mean_scorer_calls:6.1f} calls/turn")

# %% [markdown]
# The speedup of the cascade grows with the number of documents per entity,
# because the entity stage is paid once while the document stage only
# touches one entity.

# %%
for k in (1, 5, 20, 50):
    r = bench_selection(synthetic_kb(4, 10, k), contexts[:3], ["flat", "greedy", "greedy-3stage"], threshold=1.0)
    print(f"{k:>3} docs/entity: greedy {r.speedup('greedy'):5.1f}x, three-stage {r.speedup('greedy-3stage'):5.1f}x")
