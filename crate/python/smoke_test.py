"""Smoke test for the graformer_py extension module.

Build first: maturin develop -m crates/python/Cargo.toml
"""

import json
import math
import pathlib
import sys
import tempfile

import graformer_py as g

ROOT = pathlib.Path(__file__).resolve().parent.parent


def check(cond, msg):
    if not cond:
        print("FAIL", msg)
        sys.exit(1)
    print("ok  ", msg)


def main():
    labels, r = g.relative_positions(
        ["s v d", "word2vec", "embedding learning"],
        [(0, "compare", 1), (0, "used-for", 2), (1, "used-for", 2)],
        n_delta=3,
        n_p=3,
        d_max=10,
    )
    check(len(labels) == 9 and len(r) == 9, "relative positions cover 9 nodes")
    check(all(r[i][i] == 0 for i in range(9)), "diagonal is zero")
    check(r[0][1] == 11 and r[1][0] == -11, "same-entity offsets are encoded")
    check(r[7][8] is None, "parallel facts are unreachable")

    refs = [["the cat sat on the mat"], ["graphs become text"]]
    hyps = [x[0] for x in refs]
    check(g.bleu(hyps, refs) == 100.0, "BLEU of references is 100")
    check(g.chrf(hyps, refs) == 100.0, "chrF++ of references is 100")
    try:
        g.bleu([], [])
        check(False, "empty corpus rejected")
    except ValueError:
        check(True, "empty corpus rejected")

    report = g.stats(str(ROOT / "data/toy/train.jsonl"))
    check("instances=8" in report.splitlines(), "stats report")

    with tempfile.TemporaryDirectory() as out:
        best = g.train(str(ROOT / "configs/toy.toml"), str(ROOT / "data/toy"), out)
        ckpt = g.Checkpoint(best)
        check(ckpt.heads == 4 and ckpt.vocab_size > 6, "checkpoint loads")
        records = [line for line in (ROOT / "data/toy/val.jsonl").read_text().splitlines() if line]
        texts = ckpt.generate(records, beams=2, length_penalty=1.0)
        check(len(texts) == len(records), "one text per record")
        rows = ckpt.gamma()
        check(len(rows) == 10 and rows[-1][0] == "inf", "gamma table has 10 rows")
        check(all(math.isfinite(v) for _, vs in rows for v in vs), "gamma values are finite")
        try:
            ckpt.generate([json.dumps({"entities": ["a"], "facts": [[0, "r", 5]]})])
            check(False, "out-of-range fact rejected")
        except ValueError:
            check(True, "out-of-range fact rejected")

    try:
        g.Checkpoint("/nonexistent.ckpt")
        check(False, "missing checkpoint raises IOError")
    except OSError:
        check(True, "missing checkpoint raises IOError")
    print("all checks passed")


if __name__ == "__main__":
    main()
