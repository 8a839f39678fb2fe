"""Fake dependency parser: whitespace tokens, native tags from a small
lexicon, every token attached to the first one."""

import sys

LEXICON = {
    "en": {"the": "DT", "a": "DT", "cat": "NN", "dog": "NN", "sleeps": "VBZ", "runs": "VBZ", "big": "JJ",
           "quickly": "RB", "house": "NN", "in": "IN", "i": "PRP"},
    "fr": {"le": "DET", "la": "DET", "un": "DET", "chat": "NC", "chien": "NC", "dort": "V", "court": "V",
           "grand": "ADJ", "vite": "ADV", "maison": "NC", "dans": "P", "je": "CLS"},
}


def main():
    lang = sys.argv[1]
    bad = sys.argv[2] if len(sys.argv) > 2 else None
    if bad == "fail":
        sys.stderr.write("parser crashed on input\n")
        sys.exit(3)
    words = sys.stdin.read().split()
    for i, w in enumerate(words, 1):
        tag = LEXICON[lang].get(w.lower(), "NN" if lang == "en" else "NC")
        if bad and w == bad:
            tag = "XYZ"
        head = 0 if i == 1 else 1
        rel = "root" if i == 1 else "dep"
        print("\t".join([str(i), w, w.lower(), "_", tag, "_", str(head), rel, "_", "_"]))
    print()


if __name__ == "__main__":
    main()
