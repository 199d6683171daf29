"""Corpus chunking, hashed embeddings, and top-k retrieval.

The manipulator agent grounds its proposals in reference text.  This
script loads the bundled documentation corpus, chunks it, embeds every
chunk with the offline hashed n-gram embedder, and pulls the closest
passages for a query, then packs them into a budgeted context block.
"""

from evadelab.rag import (
    HashingEmbedder,
    assemble_context,
    build_index,
    chunk_corpus,
    load_corpus_dir,
    retrieve_top_k,
)
from evadelab.resources import fixture_docs_dir

documents = load_corpus_dir(fixture_docs_dir())
print(f"loaded {len(documents)} documents:")
for source, text in documents:
    print(f"  {source}: {len(text)} chars")

chunks = chunk_corpus(documents)
print(f"\nchunked into {len(chunks)} passages")

# The embedder is a pure function of its seed and dimension: character
# n-grams hashed into buckets, then normalized to unit length.  No
# network, no model weights, same vectors on every machine.
embedder = HashingEmbedder(seed=0, dimension=384)
index = build_index(chunks, embedder)
print(f"index fingerprint: {index.fingerprint}")

query = "which permission gates sending an SMS message"
hits = retrieve_top_k(index, query, k=5)
print(f"\ntop 5 for {query!r}:")
for chunk_id, distance in hits:
    chunk = index.chunks[chunk_id]
    first_line = chunk.text.strip().splitlines()[0]
    print(f"  d={distance:.4f} [{chunk.source}] {first_line[:68]}")

# Per-group retrievals merge into one deduplicated window under a
# character budget; whatever does not fit is dropped whole, at a
# passage boundary, never mid-passage.
second = retrieve_top_k(index, "hardware features a camera app declares", k=5)
window = assemble_context([("sms", hits), ("camera", second)], index, budget=600)
block = window.render()
print(f"\ncontext window: {len(window.entries)} passages, truncated={window.truncated}")
print(block[:300] + ("..." if len(block) > 300 else ""))
