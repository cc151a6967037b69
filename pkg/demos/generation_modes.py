# %% [markdown]
# # Direct, RAG and noisy-channel decoding side by side
#
# Generation only needs a next-token distribution given a prefix and a
# source sequence.  The source is the grounding document followed by the
# tagged dialog context (and an optional style marker).  The reference
# model here is an add-alpha bigram model estimated from the source itself:
# it cannot write fluent replies, but it is deterministic and cheap, which
# is enough to show how the three decoding modes combine probabilities.

# %%
import math

import numpy as np

from docdial.generation import (
    GenerationConfig,
    GenerationMode,
    NoisyChannelWeights,
    RagConfig,
    StyleToken,
    beam_search_decode,
    build_generation_input,
    generate_response,
    noisy_channel_scores,
    rag_documents,
)
from docdial.kb import DocKey, Document, KnowledgeBase, Speaker, Turn
from docdial.scoring import LexicalChannelScorer, SmoothedBigramModel
from docdial.selection import SelectionResult

kb = KnowledgeBase(
    [
        Document(DocKey("hotel", "1", "0"), "Hilton", "Does Hilton have a gym?", "Yes, the gym is open all day."),
        Document(DocKey("hotel", "1", "1"), "Hilton", "Is there a pool?", "No, there is no pool at the Hilton."),
    ]
)
context = [
    Turn(Speaker.USER, "I am staying at the Hilton."),
    Turn(Speaker.SYSTEM, "Great, how can I help?"),
    Turn(Speaker.USER, "Can I work out in the gym?"),
]
model = SmoothedBigramModel.from_texts([d.question + " " + d.answer for d in kb] + [t.text for t in context], alpha=0.01)
selection = SelectionResult([(DocKey("hotel", "1", "0"), 0.7), (DocKey("hotel", "1", "1"), 0.2)])

print(" ".join(build_generation_input(context, kb[selection.top], StyleToken.SPOKEN)))

# %% [markdown]
# Direct decoding conditions on the top document only.

# %%
source = build_generation_input(context, kb[selection.top])
for hyp in beam_search_decode(model, source, beam_size=5, max_len=12):
    print(f"{hyp.log_prob:8.3f}  complete={hyp.complete!s:5}  {' '.join(hyp.words(model.vocab))}")

# %% [markdown]
# RAG mixes the per-document next-token distributions at every step.  The
# selection scores of the top n are renormalized, here 0.7 and 0.2 become
# 7/9 and 2/9.

# %%
print([(d.key.doc_id, round(p, 3)) for d, p in rag_documents(selection, kb, RagConfig(n=2))])
for n in (1, 2):
    cfg = GenerationConfig(GenerationMode.RAG, beam_size=5, max_len=12, rag=RagConfig(n=n))
    print(f"RAG n={n}: {generate_response(context, selection, kb, model, cfg)}")

# %% [markdown]
# The noisy channel reranks the k-best list of the direct model with two
# more terms: how well the response explains the document (channel) and
# how likely it is without the document (language model).

# %%
proposals = beam_search_decode(model, source, beam_size=8, max_len=12)
weights = NoisyChannelWeights(lm_weight=0.3, channel_weight=1.0, k_best=8)
totals = noisy_channel_scores(proposals, context, kb[selection.top], model.vocab, weights,
                              LexicalChannelScorer(), model)
for hyp, total in sorted(zip(proposals, totals), key=lambda x: -x[1])[:4]:
    print(f"direct {hyp.log_prob:8.3f}  total {total:8.3f}  {' '.join(hyp.words(model.vocab))}")

# %% [markdown]
# With both weights at zero the reranker hands back the direct best, and
# RAG over a single document is the direct model.

# %%
direct = generate_response(context, selection, kb, model, GenerationConfig(beam_size=8, max_len=12))
nc = generate_response(context, selection, kb, model, GenerationConfig(
    GenerationMode.NOISY_CHANNEL, beam_size=8, max_len=12, noisy_channel=NoisyChannelWeights(0.0, 0.0, 8)))
print(direct == nc, repr(direct))
print(math.isclose(float(np.sum(model.next_token_distribution((), source))), 1.0))
