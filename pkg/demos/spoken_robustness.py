# %% [markdown]
# # Written knowledge, spoken questions
#
# Spoken test turns come from a speech recognizer: no casing, no
# punctuation, numbers and units written out, and several competing
# hypotheses per turn.  Two cheap measures narrow the gap to the written
# training data: normalize both sides to the same surface form, and score
# every ASR hypothesis instead of trusting the first one.

# %%
from docdial.detection import DetectionConfig, detect
from docdial.kb import AsrHypothesis, DocKey, Document, KnowledgeBase, Dialog, Speaker, Turn
from docdial.scoring import LexicalDetector, NbestStrategy, renormalize_nbest
from docdial.textnorm import NormalizationConfig, TruncationPolicy, normalize_text, truncate_context

cfg = NormalizationConfig()
for text in ["The room is 42 m2, 3.5 km from the centre.", "Is the TV 55 inch?", "Open 24 hours, 7 days a week.", "Only 5mm gaps"]:
    print(f"{text!r:48} -> {normalize_text(text, cfg)!r}")

# %% [markdown]
# Normalization is idempotent, so it is safe to apply to text that has
# already been through it (for instance ASR output).  Abbreviations are
# whole-token only: "5mm" stays as it is.

# %%
once = normalize_text("Check-in at 3 pm, 2 km away.", cfg)
print(once, "|", normalize_text(once, cfg) == once)

# %% [markdown]
# Only the recent context matters for detection.  Truncation keeps the last
# few utterances and, if needed, drops tokens from the oldest end.

# %%
turns = [Turn(Speaker.USER, f"utterance number {i}") for i in range(6)]
print([t.text for t in truncate_context(turns, TruncationPolicy(max_utterances=3, max_tokens=7))])

# %% [markdown]
# ASR scores are treated as log-probabilities and softmaxed into a
# posterior.  The detector scores every hypothesis; Best takes the maximum
# and Weighted takes the expectation under the posterior.

# %%
kb = KnowledgeBase([Document(DocKey("taxi", "*", "0"), None, "Can I bring a dog in the taxi?", "Dogs ride on the floor.")])
nbest = (
    AsrHypothesis("can i bring a log in the taxi", -0.4),
    AsrHypothesis("can i bring a dog in the taxi", -0.9),
    AsrHypothesis("can i ring a dog in the taxes", -2.5),
)
for hyp, p in renormalize_nbest(nbest):
    print(f"{p:.3f}  {hyp.text}")

dialog = Dialog("spoken", (Turn(Speaker.SYSTEM, "Your taxi is booked."), Turn(Speaker.USER, nbest[0].text, nbest)))
detector = LexicalDetector(kb)
for strategy in NbestStrategy:
    flag, score = detect(dialog, detector, DetectionConfig(threshold=0.9, nbest_strategy=strategy))
    print(f"{strategy.value:>8}: score {score:.3f} -> knowledge-seeking={flag}")
