"""Counts mutation sites per operator in a rules.json file by scanning rule text.

Usage: count_sites.py RULES_JSON > golden_counts.json
"""
import json
import re
import sys

TOKEN = re.compile(
    r"""\s*(?:
        (?P<str>'[^']*'|"[^"]*")
      | (?P<op><=|>=|!=|=|<|>)
      | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<num>-?\d+(?:\.\d+)?)
      | (?P<punct>[()\[\],])
    )""",
    re.VERBOSE,
)

DATE_SHIFTS = 6


def tokens(text):
    pos, out = 0, []
    while pos < len(text):
        m = TOKEN.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise ValueError(f"cannot scan {text[pos:]!r}")
        pos = m.end()
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
    return out


def split_implies(toks):
    """Left and right token lists of a top-level implies, if any."""
    depth = 0
    for i, (kind, val) in enumerate(toks):
        if val == "(":
            depth += 1
        elif val == ")":
            depth -= 1
        elif kind == "word" and val == "implies" and depth == 0:
            return toks[:i], toks[i + 1:]
    return None


def strip_parens(toks):
    while toks and toks[0][1] == "(" and toks[-1][1] == ")":
        toks = toks[1:-1]
    return toks


def count(text):
    toks = tokens(text)
    words = [v for k, v in toks if k == "word"]
    ops = [v for k, v in toks if k == "op"]
    c = {
        "ACO": sum(op in ("<", "<=", ">", ">=") for op in ops),
        "NI": sum(op in ("=", "!=") for op in ops),
        "CO": sum(w in ("and", "or") for w in words),
        "RI": sum(w in ("in", "notIn") for w in words),
        "RSE": sum(w in ("startswith", "endswith") for w in words),
        "AD": sum(w == "date" for w in words),
        "SR": 0,
        "SSI": 0,
    }
    parts = split_implies(toks)
    if parts and strip_parens(parts[0]) != strip_parens(parts[1]):
        c["SR"] = 1
    for i, (kind, val) in enumerate(toks):
        if kind == "word" and val == "substring":
            start, end = toks[i + 4][1], toks[i + 6][1]
            c["SSI"] += start != end
    return c


def main():
    rules = json.load(open(sys.argv[1]))
    per_rule = {}
    totals = {op: {"sites": 0, "mutants": 0} for op in ["ACO", "AD", "CO", "NI", "RI", "RSE", "SR", "SSI"]}
    for r in rules:
        c = count(r["expression"])
        per_rule[f'{r["id"]}/{r["version"]}'] = c
        for op, n in c.items():
            totals[op]["sites"] += n
            totals[op]["mutants"] += n * (DATE_SHIFTS if op == "AD" else 1)
    json.dump({"totals": totals, "rules": per_rule}, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
