"""Fake constituency parser: a flat S over one phrase per token."""

import sys

sys.path.insert(0, __file__.rsplit("/", 1)[0])
from dependency import LEXICON  # noqa: E402

lang = sys.argv[1]
words = sys.stdin.read().split()
phrases = []
for w in words:
    tag = LEXICON[lang].get(w.lower(), "NN" if lang == "en" else "NC")
    phrases.append(f"(XP ({tag} {w}))")
print("(ROOT (S " + " ".join(phrases) + "))")
