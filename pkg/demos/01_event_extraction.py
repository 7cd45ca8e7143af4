#!/usr/bin/env python3
"""Walk through event extraction: raw requests -> canonical event tokens.

Generates a small synthetic access log, then shows each extraction stage:
path segmentation, randomness detection, token assembly, and RARE folding.
"""

from collections import Counter

from eventcast import extractor, synthgen

# A Workqueue-style application with ~100 distinct request shapes.
grammar = synthgen.default_grammar()
requests = synthgen.generate(grammar, days=3, events_per_day=1000, seed=7)
print(f"generated {len(requests)} requests across {len({r.day for r in requests})} days")
print("first request:", requests[0].method, requests[0].path, requests[0].query_param_count)

# 1) segment paths into elements
example = next(r for r in requests if "jobs" in r.path)
elements = extractor.segment_path(example.path)
print("\npath", example.path, "->", [e.text for e in elements])

# 2) fit the character-trigram randomness detector on digit-free elements
#    from this traffic plus the bundled word list
corpus = extractor.element_corpus(requests)
model = extractor.fit_char_markov(corpus)
print(f"\nfitted randomness detector on {len(corpus)} corpus strings, theta = {model.theta:.3f}")
for element in ("status", "queue", "a8f3k2x9q1", "42"):
    verdict = "RANDOM" if extractor.is_random_element(model, element) else "keep"
    print(f"  {element!r:14s} score {model.score(element):7.3f}  -> {verdict}")

# 3) canonicalize: method + derandomized path + parameter count
event = extractor.canonicalize(example, model)
print("\ncanonical token for the job request:", repr(event.token))

# 4) build the vocabulary from training events; tokens seen fewer than
#    twice fold into RARE, as do never-seen tokens at test time
tokens = [extractor.canonicalize(r, model).token for r in requests]
vocab = extractor.build_vocabulary(tokens, rare_threshold=2)
print(f"\nvocabulary: {vocab.size} ids ({vocab.size - 3} events + PAD/MASK/RARE)")
print(f"occurrences folded to RARE: {vocab.rare_fold_count}")

common = Counter(tokens).most_common(5)
print("\nmost frequent events:")
for token, count in common:
    print(f"  {count:5d}  id={vocab.encode(token):3d}  {token}")

print("\nunseen path encodes to RARE id:", vocab.encode("GET /never/seen/before 0"))
