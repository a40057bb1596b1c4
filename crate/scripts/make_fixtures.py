#!/usr/bin/env python3
"""Generates the synthetic corpora under fixtures/.

The output is deterministic. Run from the repository root:

    python3 scripts/make_fixtures.py

The replay cache in fixtures/replay/cache is produced afterwards with
`rener cache warm --config fixtures/replay/config.toml`.
"""

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "fixtures"

CONLL_POOLS = {
    "PER": [
        "Angela Merkel", "Jacques Chirac", "Boris Yeltsin", "Nelson Mandela", "Bill Clinton",
        "Helmut Kohl", "Yasser Arafat", "Tony Blair", "Romano Prodi", "John Major",
        "Gary Lineker", "Steffi Graf", "Pete Sampras", "Alan Greenspan", "Kofi Annan",
        "Benjamin Netanyahu", "Jose Maria Aznar", "Lech Walesa",
    ],
    "ORG": [
        "European Commission", "United Nations", "NATO", "Reuters", "Bundesbank",
        "Manchester United", "Ajax Amsterdam", "Microsoft", "IMF", "World Bank",
        "Barclays", "Fiat", "Red Cross", "Bayern Munich", "General Motors", "OPEC",
    ],
    "LOC": [
        "Germany", "Paris", "Bonn", "Moscow", "Brussels", "London", "Sarajevo", "Japan",
        "Texas", "Tokyo", "Britain", "France", "Jerusalem", "South Africa", "Chechnya",
        "New York", "Lisbon", "Warsaw",
    ],
    "MISC": [
        "German", "British", "French", "Russian", "European", "Dutch", "Olympic", "Iraqi",
        "Euro 96", "Christian", "Japanese", "Israeli", "Palestinian", "World Cup",
    ],
}

CONLL_TEMPLATES = [
    "{PER} met {PER} in {LOC} on Monday .",
    "{ORG} said {MISC} exports to {LOC} rose 3 percent .",
    "{LOC} rejects {MISC} call to boycott {MISC} lamb .",
    "{PER} told {ORG} that talks would resume in {LOC} .",
    "Shares in {ORG} fell after {PER} resigned .",
    "The {MISC} side beat {ORG} 2-1 in {LOC} .",
    "{PER} , speaking in {LOC} , praised the {ORG} plan .",
    "Police in {LOC} arrested two {MISC} nationals on Tuesday .",
    "{ORG} and {ORG} agreed a merger worth 4 billion dollars .",
    "{PER} won the {MISC} title in {LOC} .",
    "Analysts expect {ORG} to cut rates next week .",
    "{LOC} and {LOC} signed a trade pact .",
    "The market closed higher on Friday .",
    "Officials declined to comment on the report .",
    "{PER} said {PER} would visit {LOC} and {LOC} .",
    "A spokesman for {ORG} in {LOC} confirmed the deal .",
]

POLITICS_POOLS = {
    "politician": [
        "Winston Churchill", "Margaret Thatcher", "Abraham Lincoln", "Franklin D. Roosevelt",
        "Charles de Gaulle", "Indira Gandhi", "Konrad Adenauer", "Jawaharlal Nehru",
        "Golda Meir", "Willy Brandt", "Clement Attlee", "Harold Wilson", "Olof Palme",
        "Pierre Trudeau", "Gough Whitlam",
    ],
    "person": [
        "Mary Smith", "John Keynes", "Hannah Arendt", "George Orwell", "Karl Popper",
        "Simone de Beauvoir", "Noam Chomsky",
    ],
    "organisation": [
        "House of Commons", "United States Senate", "Bundestag", "European Parliament",
        "Supreme Court", "Trades Union Congress", "National Assembly", "League of Nations",
    ],
    "politicalparty": [
        "Labour Party", "Conservative Party", "Democratic Party", "Republican Party",
        "Social Democratic Party", "Christian Democratic Union", "Liberal Party",
        "Indian National Congress", "Green Party",
    ],
    "event": [
        "Yalta Conference", "Cold War", "Suez Crisis", "general strike", "Velvet Revolution",
        "Marshall Plan",
    ],
    "election": [
        "1945 general election", "1964 presidential election", "1979 general election",
        "1972 federal election", "1983 general election", "1932 presidential election",
    ],
    "country": [
        "United Kingdom", "United States", "West Germany", "India", "Canada", "Australia",
        "Sweden", "Israel", "France",
    ],
    "location": [
        "Westminster", "Washington", "Bonn", "New Delhi", "Ottawa", "Canberra", "Stockholm",
        "Manchester", "Ohio",
    ],
    "misc": ["Keynesian", "socialist", "Gaullist", "Marxist", "liberal", "Thatcherism"],
}

POLITICS_TEMPLATES = [
    "{politician} led the {politicalparty} to victory in the {election} .",
    "{politician} of the {politicalparty} was elected to the {organisation} for {location} .",
    "During the {event} , {politician} argued that {country} should remain neutral .",
    "The {politicalparty} and the {politicalparty} formed a coalition after the {election} .",
    "{person} criticised the {misc} policies of {politician} .",
    "In {location} , {politician} addressed the {organisation} on the {event} .",
    "{country} ratified the treaty negotiated by {politician} and {politician} .",
    "The {organisation} rejected the bill introduced by the {politicalparty} .",
    "{politician} served as ambassador to {country} before the {event} .",
    "Turnout in the {election} was the lowest since the war .",
    "The committee met in private to discuss the budget .",
    "{person} wrote a biography of {politician} , who was born in {location} .",
    "Supporters of {misc} reform held rallies in {location} and {location} .",
    "{politician} resigned from the {politicalparty} after losing the {election} .",
]

SCIENCE_POOLS = {
    "scientist": ["Marie Curie", "Albert Einstein", "Niels Bohr", "Rosalind Franklin", "Enrico Fermi", "Lise Meitner"],
    "university": ["University of Cambridge", "Sorbonne", "ETH Zurich", "Princeton University"],
    "discipline": ["physics", "chemistry", "radiochemistry", "quantum mechanics", "crystallography"],
    "chemicalelement": ["polonium", "radium", "uranium", "helium"],
    "award": ["Nobel Prize in Physics", "Nobel Prize in Chemistry", "Copley Medal"],
    "country": ["Poland", "Denmark", "Italy", "Switzerland"],
    "academicjournal": ["Nature", "Physical Review"],
    "theory": ["general relativity", "Bohr model"],
}

SCIENCE_TEMPLATES = [
    "{scientist} discovered {chemicalelement} while working at the {university} .",
    "{scientist} received the {award} for work in {discipline} .",
    "Born in {country} , {scientist} studied {discipline} at the {university} .",
    "The article on {theory} by {scientist} appeared in {academicjournal} .",
    "{scientist} and {scientist} corresponded about {theory} .",
    "Samples of {chemicalelement} were analysed by X-ray {discipline} .",
    "The laboratory was closed during the summer .",
]


def fill(template, pools, rng):
    """Returns (tokens, tags, entities) for one sentence."""
    tokens, tags, entities = [], [], []
    for piece in template.split(" "):
        if piece.startswith("{") and piece.endswith("}"):
            code = piece[1:-1]
            segment = rng.choice(pools[code])
            words = segment.split(" ")
            tokens.extend(words)
            tags.extend([f"B-{code}"] + [f"I-{code}"] * (len(words) - 1))
            entities.append((segment, code))
        else:
            tokens.append(piece)
            tags.append("O")
    return tokens, tags, entities


def conll_file(path, n, rng):
    lines = ["-DOCSTART- -X- -X- O", ""]
    for _ in range(n):
        tokens, tags, _ = fill(rng.choice(CONLL_TEMPLATES), CONLL_POOLS, rng)
        for tok, tag in zip(tokens, tags):
            pos = "NNP" if tag != "O" else ("." if tok == "." else "NN")
            chunk = "O" if tag == "O" else "I-NP"
            lines.append(f"{tok} {pos} {chunk} {tag}")
        lines.append("")
    path.write_text("\n".join(lines) + "\n")


def crossner_file(path, n, templates, pools, rng):
    lines = []
    for _ in range(n):
        tokens, tags, _ = fill(rng.choice(templates), pools, rng)
        lines.extend(f"{tok}\t{tag}" for tok, tag in zip(tokens, tags))
        lines.append("")
    path.write_text("\n".join(lines) + "\n")


# Replay fixture: a training set, a 20-example mini validation split and the
# raw answers of an imperfect model, with each answer's expected counts.
REPLAY_LABELS = ["person", "location", "organization"]
REPLAY_POOLS = {
    "person": ["Anna Berg", "Paul Okafor", "Lena Novak", "Omar Haddad", "Keiko Sato", "Diego Ruiz"],
    "location": ["Lisbon", "Nairobi", "Oslo", "Quito", "Hanoi", "Tallinn"],
    "organization": ["Red Cross", "Acme Corp", "City Council", "Nordbank", "UNESCO", "Tech Union"],
}
REPLAY_TEMPLATES = [
    "{person} flew to {location} to meet {organization} officials .",
    "{organization} hired {person} as chief economist .",
    "{person} and {person} opened a school in {location} .",
    "Protesters in {location} marched on the {organization} offices .",
    "{organization} moved its headquarters from {location} to {location} .",
]


def replay_fixture(rng):
    seen = set()

    def examples(n, prefix):
        out = []
        while len(out) < n:
            i = len(out)
            tokens, _, entities = fill(rng.choice(REPLAY_TEMPLATES), REPLAY_POOLS, rng)
            if " ".join(tokens) in seen:
                continue
            seen.add(" ".join(tokens))
            unique = []
            for e in entities:
                if e not in unique:
                    unique.append(e)
            out.append({"id": f"{prefix}-{i:03}", "text": " ".join(tokens), "entities": unique})
        return out

    train = examples(30, "replay-train")
    mini = examples(20, "replay-mini")

    responses = {}
    expected = []
    for i, ex in enumerate(mini):
        gold = ex["entities"]
        lines, tp, fp, fn = [], 0, 0, 0
        style = i % 5
        if style == 0:
            # Perfect answer.
            lines = [f"{n}. {s} ({l})" for n, (s, l) in enumerate(gold, 1)]
            tp = len(gold)
        elif style == 1:
            # Drops the last entity and adds preamble prose.
            lines = ["Here are the entities:"] + [f"{n}. {s} ({l})" for n, (s, l) in enumerate(gold[:-1], 1)]
            tp, fn = len(gold) - 1, 1
        elif style == 2:
            # Swaps the label of the first entity.
            (s0, l0), rest = gold[0], gold[1:]
            wrong = next(l for l in REPLAY_LABELS if l != l0)
            lines = [f"1. {s0} ({wrong.upper()})"] + [f"{n}. {s} ({l})" for n, (s, l) in enumerate(rest, 2)]
            tp, fp, fn = len(rest), 1, 1
        elif style == 3:
            # Adds a hallucinated segment and an unknown label, both discarded.
            lines = [f"{n}. {s} ({l})" for n, (s, l) in enumerate(gold, 1)]
            lines += [f"{len(gold) + 1}. Atlantis (location)", f"{len(gold) + 2}. Monday (date)"]
            tp = len(gold)
        else:
            # Adds a real but non-entity span with a valid label.
            lines = [f"{n}. {s} ({l})" for n, (s, l) in enumerate(gold, 1)]
            span = ex["text"].split(" ")[-2]
            lines.append(f"{len(gold) + 1}. {span} (organization)")
            tp, fp = len(gold), 1
            if (span, "organization") in gold:
                raise SystemExit("fixture design assumption broken; change the seed")
        responses[ex["text"]] = "\n".join(lines)
        expected.append({"id": ex["id"], "tp": tp, "fp": fp, "fn": fn})

    def as_yaml_doc(name, items):
        return {
            "name": name,
            "labels": REPLAY_LABELS,
            "examples": [
                {"id": e["id"], "text": e["text"], "entities": [{"segment": s, "label": l} for s, l in e["entities"]]}
                for e in items
            ],
        }

    out = ROOT / "replay"
    out.mkdir(parents=True, exist_ok=True)
    # JSON is valid YAML; the files are written as JSON for exact control of quoting.
    (out / "train.yaml").write_text(json.dumps(as_yaml_doc("replay-train", train), indent=2) + "\n")
    (out / "mini.yaml").write_text(json.dumps(as_yaml_doc("replay-mini", mini), indent=2) + "\n")
    (out / "responses.json").write_text(json.dumps(responses, indent=2, sort_keys=True) + "\n")
    tp = sum(e["tp"] for e in expected)
    fp = sum(e["fp"] for e in expected)
    fn = sum(e["fn"] for e in expected)
    (out / "expected_counts.json").write_text(
        json.dumps({"per_example": expected, "tp": tp, "fp": fp, "fn": fn}, indent=2) + "\n"
    )


def main():
    conll = ROOT / "conll2003"
    conll.mkdir(parents=True, exist_ok=True)
    rng = random.Random(1)
    conll_file(conll / "train.txt", 200, rng)
    conll_file(conll / "valid.txt", 200, rng)
    conll_file(conll / "test.txt", 200, rng)

    politics = ROOT / "crossner" / "politics"
    politics.mkdir(parents=True, exist_ok=True)
    rng = random.Random(2)
    crossner_file(politics / "train.txt", 200, POLITICS_TEMPLATES, POLITICS_POOLS, rng)
    crossner_file(politics / "dev.txt", 60, POLITICS_TEMPLATES, POLITICS_POOLS, rng)
    crossner_file(politics / "test.txt", 60, POLITICS_TEMPLATES, POLITICS_POOLS, rng)

    science = ROOT / "crossner" / "science"
    science.mkdir(parents=True, exist_ok=True)
    rng = random.Random(3)
    crossner_file(science / "train.txt", 100, SCIENCE_TEMPLATES, SCIENCE_POOLS, rng)
    crossner_file(science / "dev.txt", 40, SCIENCE_TEMPLATES, SCIENCE_POOLS, rng)
    crossner_file(science / "test.txt", 40, SCIENCE_TEMPLATES, SCIENCE_POOLS, rng)

    replay_fixture(random.Random(4))


if __name__ == "__main__":
    main()
