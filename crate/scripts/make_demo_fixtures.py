"""Regenerate crates/core/fixtures/demo.

The demo corpus is built from a tiny grammar (subject, past-tense verb,
optional object, prepositional phrases) so that constituency trees and
POS tags can be written out exactly. Fault triggers use words that only
ever appear in token-level mutants ("great", "quiet", "modern") or the
question mark that only structural mutants end with.
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "fixtures" / "demo"

LEXICON = {
    "PER": ["Merkel", "Lopez", "Carter", "Shah", "Becker", "Rossi", "Okafor", "Tanaka"],
    "LOC": ["Berlin", "Paris", "Madrid", "Lisbon", "Oslo", "Vienna", "Nairobi", "Lima", "Cairo", "Dublin"],
    "ORG": ["Siemens", "Google", "Toyota", "Reuters", "Red Cross", "United Nations", "New York Times", "New York Post"],
    "MISC": ["Olympics", "Nobel Prize", "Grammy", "Champions League"],
}
LABEL = {surface: label for label, items in LEXICON.items() for surface in items}

# Token-level candidates returned for every masked non-entity token.
MASK_CANDIDATES = [["great", 9.0], ["quiet", 8.0], ["modern", 7.0], ["praised", 6.0], ["supported", 5.0]]
CANDIDATE_TAGS = {"great": "JJ", "quiet": "JJ", "modern": "JJ", "praised": "VBD", "supported": "VBD"}
TRIGGER_WORDS = ["great", "quiet", "modern"]

FAULTS = [
    {"trigger": {"substring": "quiet"}, "effect": {"drop_entity": {"surface": "Berlin"}}},
    {"trigger": {"substring": "modern"}, "effect": {"add_entity": {"surface": "museum", "label": "ORG"}}},
    {"trigger": {"substring": "great"}, "effect": {"relabel": {"surface": "Siemens", "new_label": "PER"}}},
    {"trigger": {"suffix": "?"}, "effect": {"split_entity": {"surface": "New York Times", "parts": ["New York", "Times"]}}},
    {"trigger": {"suffix": "?"}, "effect": {"drop_entity": {"surface": "Google"}}},
]

# Nouns that a fault may wrongly label; repair needs candidates for them too.
COMMON_REPAIR = {"museum": [["gallery", 8.0], ["building", 7.0], ["theatre", 6.0]]}

NOUN_SYNONYMS = {
    "museum": "gallery", "bakery": "shop", "factory": "plant", "council": "board",
    "conference": "meeting", "response": "reaction", "plant": "facility", "team": "squad",
    "report": "study", "bridge": "road", "school": "college", "hospital": "clinic",
    "contract": "deal", "festival": "fair", "market": "bazaar", "program": "scheme",
    "station": "terminal", "stadium": "arena", "office": "branch", "project": "venture",
}

# subject, verb, object, prepositional phrases; words carry their tags.
HANDWRITTEN = [
    ("Merkel/NNP", "visited", "a/DT new/JJ museum/NN", ["in/IN Berlin/NNP"]),
    ("Lopez/NNP", "opened", "a/DT small/JJ bakery/NN", ["in/IN Lisbon/NNP"]),
    ("Siemens/NNP", "announced", "a/DT new/JJ factory/NN", ["in/IN Madrid/NNP"]),
    ("The/DT New/NNP York/NNP Times/NNP", "praised", "the/DT local/JJ council/NN", []),
    ("Google/NNP", "hosted", "a/DT small/JJ conference/NN", ["in/IN Oslo/NNP"]),
    ("Carter/NNP", "won", "the/DT Nobel/NNP Prize/NNP", []),
    ("Shah/NNP", "joined", "the/DT Red/NNP Cross/NNP", ["in/IN Nairobi/NNP"]),
    ("The/DT United/NNP Nations/NNPS", "criticized", "the/DT slow/JJ response/NN", ["in/IN Cairo/NNP"]),
    ("Toyota/NNP", "built", "a/DT large/JJ plant/NN", ["near/IN Lima/NNP"]),
    ("Becker/NNP", "coached", "the/DT young/JJ team/NN", ["during/IN the/DT Olympics/NNPS"]),
    ("Merkel/NNP", "met", "Lopez/NNP", ["in/IN Vienna/NNP"]),
    ("Rossi/NNP", "traveled", None, ["from/IN Paris/NNP", "to/TO Dublin/NNP"]),
    ("Reuters/NNP", "published", "a/DT detailed/JJ report/NN", ["on/IN Siemens/NNP"]),
    ("The/DT old/JJ bridge/NN", "connected", "Berlin/NNP", ["with/IN the/DT eastern/JJ districts/NNS"]),
    ("Okafor/NNP", "scored", "two/CD goals/NNS", ["in/IN the/DT Champions/NNPS League/NNP"]),
    ("Tanaka/NNP", "received", "a/DT Grammy/NNP", ["in/IN Madrid/NNP"]),
    ("The/DT New/NNP York/NNP Post/NNP", "interviewed", "Carter/NNP", ["in/IN Dublin/NNP"]),
    ("Google/NNP", "acquired", "a/DT young/JJ company/NN", ["in/IN Paris/NNP"]),
    ("The/DT local/JJ school/NN", "celebrated", "a/DT long/JJ tradition/NN", []),
    ("Shah/NNP", "thanked", "Becker/NNP", ["after/IN the/DT final/JJ match/NN"]),
]

SUBJECT_NPS = ["The/DT city/NN council/NN", "The/DT regional/JJ office/NN", "A/DT private/JJ investor/NN"]
VERBS = ["visited", "opened", "funded", "praised", "reported", "criticized", "joined", "signed"]
OBJECT_NPS = [
    "a/DT public/JJ hospital/NN", "the/DT annual/JJ festival/NN", "a/DT busy/JJ market/NN",
    "the/DT central/JJ station/NN", "a/DT huge/JJ stadium/NN", "the/DT bold/JJ project/NN",
    "a/DT major/JJ contract/NN", "the/DT early/JJ program/NN",
]
PREPS = ["in", "near"]


def words(chunk):
    return [tuple(w.rsplit("/", 1)) for w in chunk.split()]


def np_tree(chunk):
    return "(NP " + " ".join(f"({t} {w})" for w, t in words(chunk)) + ")"


def pp_tree(chunk):
    ws = words(chunk)
    head, rest = ws[0], ws[1:]
    inner = " ".join(f"{w}/{t}" for w, t in rest)
    return f"(PP ({head[1]} {head[0]}) {np_tree(inner)})"


def build(subj, verb, obj, pps):
    tagged = words(subj) + [(verb, "VBD")]
    vp = [f"(VBD {verb})"]
    if obj:
        tagged += words(obj)
        vp.append(np_tree(obj))
    for pp in pps:
        tagged += words(pp)
        vp.append(pp_tree(pp))
    tree = f"(ROOT (S {np_tree(subj)} (VP {' '.join(vp)}) (. .)))"
    text = " ".join(w for w, _ in tagged) + "."
    return text, tagged, tree


def generated(rng, n):
    people = LEXICON["PER"]
    orgs = ["Toyota", "Reuters", "Siemens", "Google"]
    out = []
    while len(out) < n:
        subj = rng.choice(SUBJECT_NPS + [f"{p}/NNP" for p in people + orgs])
        obj = rng.choice(OBJECT_NPS)
        pps = [f"{rng.choice(PREPS)}/IN {rng.choice(LEXICON['LOC'])}/NNP"]
        item = (subj, rng.choice(VERBS), obj, pps)
        if item not in out:
            out.append(item)
    return out


def entity_occurrence(text, surface):
    start = 0
    while True:
        i = text.find(surface, start)
        if i < 0:
            return None
        end = i + len(surface)
        before = text[i - 1] if i > 0 else " "
        after = text[end] if end < len(text) else " "
        if not before.isalnum() and not after.isalnum():
            return i
        start = i + 1


def repair_candidates(surface):
    if surface in COMMON_REPAIR:
        return COMMON_REPAIR[surface]
    label = LABEL[surface]
    same = [s for s in LEXICON[label] if s != surface and " " not in s][:3]
    other_label = "LOC" if label != "LOC" else "ORG"
    other = [s for s in LEXICON[other_label] if " " not in s][0]
    return [[w, logit] for w, logit in zip(same, [8.5, 7.5, 6.5])] + [[other, 6.0]]


def last_piece_candidates(surface):
    """Multi-word entities vote through their last word, drawing on
    lexicon entries of the same label that share the leading words."""
    head, _, last = surface.rpartition(" ")
    label = LABEL[surface]
    return [
        [other.rpartition(" ")[2], 8.0]
        for other in LEXICON[label]
        if other != surface and other.rpartition(" ")[0] == head
    ]


def mask_entries(text):
    out = {}
    for surface in list(LABEL) + list(COMMON_REPAIR):
        i = entity_occurrence(text, surface)
        if i is None:
            continue
        if " " in surface:
            cands = last_piece_candidates(surface)
            if cands:
                j = i + surface.rindex(" ") + 1
                out[text[:j] + "[MASK]" + text[i + len(surface):]] = cands
            continue
        out[text[:i] + "[MASK]" + text[i + len(surface):]] = repair_candidates(surface)
    return out


def token_mutants(text, tagged):
    out = []
    for word, tag in tagged:
        if not tag.startswith("JJ") or word in LABEL:
            continue
        i = entity_occurrence(text, word)
        for cand in TRIGGER_WORDS:
            out.append(text[:i] + cand + text[i + len(word):])
    return out


def main():
    rng = random.Random(7)
    items = HANDWRITTEN + generated(rng, 50 - len(HANDWRITTEN))
    OUT.mkdir(parents=True, exist_ok=True)

    corpus, script, vocab = [], [], {}
    masks = {}
    for n, item in enumerate(items, 1):
        text, tagged, tree = build(*item)
        assert not any(w in text.split() for w in TRIGGER_WORDS) and "?" not in text
        corpus.append({"id": f"d{n:02}", "text": text})
        script.append({"oracle": "parser", "query": text, "response": tree})
        for w, t in tagged:
            vocab.setdefault(w, t)
        for t in [text] + token_mutants(text, tagged):
            masks.update(mask_entries(t))

    for synonym in NOUN_SYNONYMS.values():
        vocab.setdefault(synonym, "NN")
    for word, tag in CANDIDATE_TAGS.items():
        vocab[word] = tag
    for word, tag in sorted(vocab.items()):
        script.append({"oracle": "pos_word", "query": word, "response": tag})
    script.append({"oracle": "pos_word", "query": "*", "response": "NN"})

    for _, _, obj, _ in items:
        if not obj or any(w in LABEL for w, _ in words(obj)):
            continue
        ws = [w for w, _ in words(obj)]
        if ws[-1] in NOUN_SYNONYMS:
            alt = " ".join(ws[:-1] + [NOUN_SYNONYMS[ws[-1]]])
            script.append({"oracle": "phrase_sim", "query": " ".join(ws), "response": [alt]})
    script.append({"oracle": "phrase_sim", "query": "*", "response": []})

    for masked, cands in sorted(masks.items()):
        script.append({"oracle": "masked_lm", "query": masked, "response": cands})
    script.append({"oracle": "masked_lm", "query": "*", "response": MASK_CANDIDATES})
    script.append({"oracle": "embedding", "query": "*", "response": [0.6, 0.8, 0.0, 0.0]})
    script.append({"oracle": "naturalness", "query": "*", "response": 0.5})

    seen = []
    for line in script:
        key = (line["oracle"], line["query"])
        assert key not in seen or line["oracle"] == "phrase_sim", key
        seen.append(key)

    with open(OUT / "corpus.jsonl", "w") as f:
        for rec in corpus:
            f.write(json.dumps(rec) + "\n")
    with open(OUT / "oracles.jsonl", "w") as f:
        for line in script:
            f.write(json.dumps(line) + "\n")
    lexicon = {s: LABEL[s] for s in sorted(LABEL)}
    (OUT / "lexicon.json").write_text(json.dumps(lexicon, indent=2) + "\n")
    (OUT / "faults.json").write_text(json.dumps(FAULTS, indent=2) + "\n")


if __name__ == "__main__":
    main()
