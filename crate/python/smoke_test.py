"""Smoke test for the mixsum extension module.

Build and install first, e.g.
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist && pip install dist/*.whl
then run `python python/smoke_test.py` from the repository root.
"""

import math
import os
import sys
import tempfile

import mixsum

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def check(cond, what):
    if not cond:
        sys.exit(f"FAIL: {what}")
    print(f"ok   {what}")


def main():
    params = mixsum.count_params(33_000)
    check(abs(params - 61e6) / 61e6 < 0.02, f"full-size model has {params / 1e6:.2f}M parameters")

    check(math.isclose(mixsum.lr_at(0), 1e-9, rel_tol=1e-12), "pretrain schedule starts at 1e-9")
    check(math.isclose(mixsum.lr_at(16_000), 1e-3, rel_tol=1e-12), "pretrain schedule peaks at 1e-3")

    r = mixsum.rouge("the cat sat", "the cat")
    check(math.isclose(r["rouge1"]["f1"], 0.8, abs_tol=1e-12), "unigram F1 of 0.8")
    r = mixsum.rouge("法国队获胜", "法国队", lang="zh")
    check(math.isclose(r["rouge1"]["recall"], 1.0), "character units for Chinese")

    vocab = mixsum.Vocab.train({"en": ["the cat sat on the mat"] * 20, "zh": ["猫坐在垫子上"] * 20}, size=420)
    ids = vocab.encode("the cat sat")
    check(vocab.decode(ids) == "the cat sat", f"vocab round trip ({len(vocab)} ids)")
    src, tgt = vocab.corrupt_mlm(ids, "en", mask_prob=0.5, seed=3)
    check(vocab.restore(src, tgt) == ids, "sentinel corruption restores")

    model = mixsum.Model(len(vocab), num_layers=1, num_heads=2, d_model=16, d_ff=32, seed=1)
    hyps = model.beam_search(vocab, ids, task="ms", lang="en", beam_size=3, max_len=5)
    check(len(hyps) > 0 and all(len(h) <= 5 for h, _ in hyps), "beam search on an untrained model")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "m.ckpt")
        model.save(path)
        check(mixsum.Model.load(path).num_params == model.num_params, "checkpoint round trip")

        plan = mixsum.Plan(
            os.path.join(ROOT, "crates", "core", "plans", "small.toml"),
            [f"output_dir={tmp}", "seeds=[0]", "pretrain.steps=50", "finetune.steps=50"],
        )
        runs = plan.run()
        check(len(runs) == 1 and 0.0 <= runs[0]["rouge"]["rouge1"]["f1"] <= 1.0, "one-seed pipeline run")
        check(os.path.exists(os.path.join(plan.run_dir("pipeline", 0), "manifest.json")), "run directory written")

    try:
        mixsum.Plan(None, ["no_such_key=1"])
    except mixsum.MixsumError:
        check(True, "unknown plan keys rejected")
    else:
        check(False, "unknown plan keys rejected")

    print("smoke test passed")


if __name__ == "__main__":
    main()
