# %% [markdown]
# # Scoring a submission
#
# A submission is one label per dialog: whether the last user turn needs the
# knowledge base, the ranked documents, and a response.  Detection is scored
# with precision/recall/F1.  Everything downstream is computed only on turns
# that both the system and the reference flag, then rescaled so that missed
# and spurious detections still cost something.

# %%
import json

from docdial.kb import DocKey, Document, KnowledgeBase, Label
from docdial.metrics import (
    bleu_n,
    detection_weighted,
    evaluate,
    meteor,
    overall_rank,
    rouge_l,
    spearman,
)

T = str.split
hyp, ref = T("yes the hilton has a gym"), T("yes the hilton has a gym open all day")
for n in range(1, 5):
    print(f"BLEU-{n}: {bleu_n(hyp, ref, n):.4f}")
print(f"METEOR: {meteor(hyp, ref):.4f}   ROUGE-L: {rouge_l(hyp, ref):.4f}")

# %% [markdown]
# BLEU here is sentence-level, cumulative, with the usual brevity penalty
# and no smoothing: a single missing n-gram order drives it to zero.
# Cumulative BLEU is also not monotone in n; a hypothesis with poor
# unigrams but perfect bigrams scores higher at n = 2.

# %%
print(bleu_n(T("b a"), T("a b"), 2), bleu_n(T("a b a"), T("b a b"), 1), bleu_n(T("a b a"), T("b a b"), 2))

# %% [markdown]
# The rescaling treats a downstream sum S over the true positives like a
# soft true-positive count: 2S / (2TP + FP + FN).

# %%
print(detection_weighted(1.5, tp=2, fp=1, fn=1))

# %%
gym = DocKey("hotel", "1", "1")
pets = DocKey("hotel", "1", "0")
kb = KnowledgeBase(
    [
        Document(gym, "Hilton", "Does Hilton have a gym?", "Yes, the Hilton has a gym open 24 hours."),
        Document(pets, "Hilton", "Are pets allowed?", "No, pets are not allowed."),
    ]
)
references = [
    Label(True, (gym,), "Yes, the Hilton has a gym open 24 hours."),
    Label(False),
    Label(True, (pets,), "Sorry, no pets are allowed."),
]
predictions = [
    Label(True, (gym, pets), "Yes, there is a gym open 24 hours."),
    Label(True, (pets,), "Pets are welcome."),
    Label(True, (gym, pets), "No, pets are not allowed."),
]
report = evaluate(predictions, references, kb)
print(json.dumps(report.to_json(), indent=2))

# %% [markdown]
# When several systems are compared, each metric turns into a rank and the
# systems are ordered by the mean reciprocal rank over metrics.  Spearman's
# rho then says how well one metric orders systems like another does, for
# example automatic scores against human ratings.

# %%
table = {
    "A": {"bleu": 0.12, "meteor": 0.30, "rouge": 0.33},
    "B": {"bleu": 0.15, "meteor": 0.28, "rouge": 0.35},
    "C": {"bleu": 0.09, "meteor": 0.31, "rouge": 0.29},
}
print(overall_rank(table))
human = [4.1, 4.3, 3.6]
print(f"rho(bleu, human) = {spearman([table[s]['bleu'] for s in 'ABC'], human):.3f}")
