"""Walkthrough: evaluating synthetic corpora against a reference corpus.

Trains a from-scratch bigram model per system and scores it on the reference
(lower perplexity = closer style), compares embedding depth distributions
(Q near 0.5 = similar), then min-max scales both onto 0-1.
"""

from portalgen.corpus import Corpus, Message
from portalgen.llm import mock_complete
from portalgen.metrics import (
    HashingNgramEmbedder,
    embed_corpus,
    evaluate_systems,
    mean_perplexity,
    q_value,
    train_lm,
)


def mock_corpus(tag: str, seed: int, n: int = 60) -> Corpus:
    return Corpus(tag, [Message(f"{tag}-{i}", mock_complete(f"{tag} {i}", seed).text) for i in range(n)])


# The reference and "grounded" share the mock's message register; "offstyle"
# deliberately breaks it to play the part of an ungrounded baseline.
reference = mock_corpus("reference", seed=1)
grounded = mock_corpus("grounded", seed=2)
offstyle = Corpus(
    "offstyle",
    [
        Message(f"off-{i}", f"Dear Sir or Madam, I hereby formally request clarification item {i}. Regards.")
        for i in range(60)
    ],
)

lm = train_lm(grounded)
print(f"bigram LM over grounded corpus: |V| = {len(lm.vocabulary)} tokens")
print(f"mean perplexity on reference: grounded-trained = {mean_perplexity(lm, reference):.1f}, "
      f"offstyle-trained = {mean_perplexity(train_lm(offstyle), reference):.1f}")

embedder = HashingNgramEmbedder()
ref_emb = embed_corpus(reference, embedder)
print(f"\nQ(reference, grounded) = {q_value(ref_emb, embed_corpus(grounded, embedder)):.3f}  (0.5 = alike)")
print(f"Q(reference, offstyle) = {q_value(ref_emb, embed_corpus(offstyle, embedder)):.3f}")

entries = evaluate_systems(reference, {"grounded": grounded, "offstyle": offstyle}, embedder)
print("\nsystem      perplexity      q    score_ppl  score_depth")
for e in entries:
    print(f"{e.system:<10} {e.mean_perplexity:>10.1f} {e.q_value:>6.3f} {e.score_perplexity:>10.2f} {e.score_depth:>12.2f}")
print("\n(scores are min-max scaled across systems: 1 = best, 0 = worst per metric)")
