"""Brute-force scorer used to freeze the expected counts in the eval tests.

usage: score_oracle.py gold.tsv pairs.tsv
Prints "tp fp fn". Written independently of the C++ scorer: values are
compared as sets of (doc, class, value) after lowercasing, whitespace
collapsing and stripping trailing sentence punctuation.
"""
import re
import sys


def norm(v):
    v = re.sub(r"\s+", " ", v.strip().lower())
    return re.sub(r"[\s.,;:!?]+$", "", v)


def main(gold_path, pairs_path):
    gold = set()
    for line in open(gold_path, encoding="utf-8"):
        line = line.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        doc, cls, val = line.split("\t")
        gold.add((doc.strip(), cls.strip(), norm(val)))
    got = set()
    rows = open(pairs_path, encoding="utf-8").read().splitlines()[1:]
    for line in rows:
        if not line:
            continue
        cls, _kw, val, _unit, doc, _s, _e, method = line.split("\t")
        if method == "manual_pending":
            continue
        got.add((doc, cls, norm(val)))
    print(len(got & gold), len(got - gold), len(gold - got))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
