#!/usr/bin/env python3
"""Runs a causal LM over a pool and writes sift feature-store shards.

  sift_extract.py run --model M --pool pool.jsonl --out-dir DIR [options]
  sift_extract.py merge --out DIR/manifest.json DIR/part-a.json DIR/part-b.json

Models: a local or hub path loadable by transformers, or one of the toys
  toy-uniform:VOCAB:DIM   uniform next-token distribution, table-lookup states
  toy-gpt2:DIM:SEED       2-layer GPT-2 with seeded random weights
Toys use a byte tokenizer (256 bytes, then bos and eos).
"""

import argparse
import hashlib
import json
import math
import os
import struct
import sys

import numpy as np

MAGIC = b"SIFT"
HEADER = struct.Struct("<4sIIQQI")
EMBEDDING, HIDDEN, LOSS, TOKEN_COUNT = 1, 2, 3, 4
OUTPUTS = ("hidden_states", "pooled_embeddings", "loss_records", "token_counts")
TOY_POSITIONS = 4096


# ---------------------------------------------------------------------------
# tokenizers and models

class ByteTokenizer:
    bos, eos, vocab = 256, 257, 258

    def encode(self, text):
        return list(text.encode("utf-8"))


class HFTokenizer:
    def __init__(self, tok):
        self.tok = tok
        self.eos = tok.eos_token_id
        self.bos = tok.bos_token_id if tok.bos_token_id is not None else tok.eos_token_id

    def encode(self, text):
        return self.tok(text, add_special_tokens=False)["input_ids"] if text else []


class UniformModel:
    """Every next-token distribution is uniform; states come from a fixed table."""

    def __init__(self, vocab, dim):
        self.vocab = vocab
        self.table = np.random.default_rng(0).standard_normal((ByteTokenizer.vocab, dim)).astype(np.float32)

    def forward(self, ids):
        logp = np.full((len(ids), self.vocab), -math.log(self.vocab))
        return self.table[np.asarray(ids)], logp

    def target(self, token):
        return token % self.vocab


class TorchModel:
    def __init__(self, model):
        import torch
        self.torch = torch
        self.model = model.eval()

    def forward(self, ids):
        torch = self.torch
        with torch.no_grad():
            out = self.model(torch.tensor([ids]), output_hidden_states=True)
            states = out.hidden_states[-1][0].float().numpy()
            logp = torch.log_softmax(out.logits[0].double(), dim=-1).numpy()
        return states, logp

    def target(self, token):
        return token


def load_model(name, max_tokens):
    if name.startswith("toy-uniform:"):
        _, vocab, dim = name.split(":")
        return ByteTokenizer(), UniformModel(int(vocab), int(dim))
    if name.startswith("toy-gpt2:"):
        import torch
        from transformers import GPT2Config, GPT2LMHeadModel
        _, dim, seed = name.split(":")
        if max_tokens + 1 > TOY_POSITIONS:
            raise SystemExit("toy-gpt2 supports max_tokens < %d" % TOY_POSITIONS)
        torch.manual_seed(int(seed))
        cfg = GPT2Config(vocab_size=ByteTokenizer.vocab, n_positions=TOY_POSITIONS,
                         n_embd=int(dim), n_layer=2, n_head=2,
                         bos_token_id=ByteTokenizer.bos, eos_token_id=ByteTokenizer.eos)
        return ByteTokenizer(), TorchModel(GPT2LMHeadModel(cfg))
    import torch
    from transformers import AutoModelForCausalLM, AutoTokenizer
    tok = AutoTokenizer.from_pretrained(name)
    model = AutoModelForCausalLM.from_pretrained(name, torch_dtype=torch.float32)
    return HFTokenizer(tok), TorchModel(model)


# ---------------------------------------------------------------------------
# rendering

ROLES = ("system", "user", "assistant")


def render(sample, tok, template):
    """Token ids plus prompt/answer spans. The answer is the last assistant turn."""
    msgs = sample["messages"]
    for m in msgs:
        if m.get("role") not in ROLES:
            raise ValueError("unknown role %r" % m.get("role"))
    last = max((i for i, m in enumerate(msgs) if m["role"] == "assistant"), default=None)
    ids, answer = [], None
    for i, m in enumerate(msgs):
        if template == "tulu":
            ids += tok.encode("<|%s|>\n" % m["role"])
        body = tok.encode(m["content"])
        if i == last:
            answer = (len(ids), len(ids) + len(body))
        ids += body
        if m["role"] == "assistant":
            ids.append(tok.eos)
        ids += tok.encode("\n")
    if answer is None:
        answer = (len(ids), len(ids))
    return ids, (0, answer[0]), answer


def answer_alone(tok, template, answer_ids):
    scaffold = tok.encode("<|assistant|>\n") if template == "tulu" else []
    return scaffold + answer_ids, len(scaffold)


def nll_sum(model, logp, ids, lo, hi):
    # Row t of logp predicts input position t + 1; ids here exclude the bos.
    return float(sum(-logp[t, model.target(ids[t])] for t in range(lo, hi)))


def pool_states(states, span, kind):
    lo, hi = span
    if hi <= lo:
        return None
    h = states[lo:hi].astype(np.float64)
    if kind == "eos_only":
        return states[hi - 1].copy()
    w = np.arange(1, hi - lo + 1, dtype=np.float64) if kind == "weighted" else np.ones(hi - lo)
    acc = (w[:, None] * h).sum(axis=0)
    denom = (hi - lo) * (hi - lo + 1) / 2.0 if kind == "weighted" else float(hi - lo)
    return (acc / denom).astype(np.float32)


def extract_one(sample, tok, model, args):
    ids, prompt, answer = render(sample, tok, args.template)
    ids = ids[:args.max_tokens]
    L = len(ids)
    clip = lambda s: (min(s[0], L), min(s[1], L))
    prompt, answer = clip(prompt), clip(answer)
    if L == 0:
        raise ValueError("empty after truncation")
    states, logp = model.forward([tok.bos] + ids)
    states = states[1:]
    rec = {"states": states, "prompt": prompt, "answer": answer}
    a = answer[1] - answer[0]
    cond = nll_sum(model, logp, ids, *answer)
    uncond = 0.0
    if a > 0:
        alone, skip = answer_alone(tok, args.template, ids[answer[0]:answer[1]])
        _, alone_logp = model.forward([tok.bos] + alone)
        uncond = nll_sum(model, alone_logp, alone, skip, skip + a)
    rec["loss"] = (L, prompt[1] - prompt[0], a, nll_sum(model, logp, ids, 0, L), cond, uncond)
    return rec


# ---------------------------------------------------------------------------
# shard writers

def header(rtype, start, count, dim):
    return HEADER.pack(MAGIC, 1, rtype, start, count, dim)


def write_shards(out_dir, start, recs, dim, outputs, kind, span_name):
    tag = "%08d" % start
    written = []

    def emit(name, rtype, shard_dim, payload):
        path = os.path.join(out_dir, "%s-%s.bin" % (name, tag))
        with open(path, "wb") as f:
            f.write(header(rtype, start, len(recs), shard_dim))
            f.write(payload)
        written.append({"path": os.path.basename(path), "type": TYPE_NAMES[rtype],
                        "start": start, "count": len(recs), "dim": shard_dim})

    if "hidden_states" in outputs:
        parts = []
        for r in recs:
            s = r["states"] if r else np.zeros((0, dim), np.float32)
            p, a = (r["prompt"], r["answer"]) if r else ((0, 0), (0, 0))
            parts.append(struct.pack("<5I", s.shape[0], *p, *a) + s.astype("<f4").tobytes())
        emit("hidden", HIDDEN, dim, b"".join(parts))
    if "pooled_embeddings" in outputs:
        rows = []
        for r in recs:
            v = None
            if r:
                span = {"full": (0, r["states"].shape[0]), "prompt_only": r["prompt"],
                        "label_only": r["answer"]}[span_name]
                v = pool_states(r["states"], span, kind)
            rows.append(np.zeros(dim, np.float32) if v is None else v)
        emit("emb", EMBEDDING, dim, np.asarray(rows, dtype="<f4").tobytes())
    if "loss_records" in outputs:
        parts = []
        for r in recs:
            full, prompt, answer, nll, cond, uncond = r["loss"] if r else (0, 0, 0, 0.0, 0.0, 0.0)
            parts.append(struct.pack("<4I3d", full, prompt, answer, 0, nll, cond, uncond))
        emit("loss", LOSS, 0, b"".join(parts))
    if "token_counts" in outputs:
        emit("tokens", TOKEN_COUNT, 1, b"".join(
            struct.pack("<I", r["loss"][0] if r else 0) for r in recs))
    return written


TYPE_NAMES = {EMBEDDING: "embedding", HIDDEN: "hidden_states", LOSS: "loss",
              TOKEN_COUNT: "token_count"}


# ---------------------------------------------------------------------------
# commands

def file_fingerprint(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def parse_range(text, size):
    if not text:
        return 0, size
    lo, hi = (int(x) for x in text.split(":"))
    if not 0 <= lo < hi <= size:
        raise SystemExit("range %s outside pool of %d" % (text, size))
    return lo, hi


def cmd_run(args):
    if args.max_tokens < 1:
        raise SystemExit("max_tokens must be >= 1")
    outputs = args.outputs
    if not outputs:
        raise SystemExit("request at least one output")
    with open(args.pool, encoding="utf-8") as f:
        pool = [json.loads(line) for line in f if line.strip()]
    lo, hi = parse_range(args.range, len(pool))
    tok, model = load_model(args.model, args.max_tokens)
    os.makedirs(args.out_dir, exist_ok=True)

    shards, failures, ineligible, dim = [], [], [], None
    pending, pending_start = [], lo
    for i in range(lo, hi):
        try:
            rec = extract_one(pool[i], tok, model, args)
            dim = rec["states"].shape[1]
            if rec["loss"][2] == 0:
                ineligible.append(i)
        except ValueError as e:
            print("sample %d: %s" % (i, e), file=sys.stderr)
            failures.append(i)
            rec = None
        pending.append(rec)
        if len(pending) == args.shard_rows or i + 1 == hi:
            if dim is None:
                dim = model.forward([tok.bos])[0].shape[1]
            shards += write_shards(args.out_dir, pending_start, pending, dim, outputs,
                                   args.pooling_kind, args.pooling_span)
            pending, pending_start = [], i + 1

    attributes = {
        "chat_template": args.template,
        "answer_alone_scaffold": "excluded",
        "outputs": ",".join(o for o in OUTPUTS if o in outputs),
        "range": "%d:%d" % (lo, hi),
        "failures": ",".join(map(str, failures)),
        "ifd_ineligible": ",".join(map(str, ineligible)),
    }
    if "pooled_embeddings" in outputs:
        attributes["pooling_kind"] = args.pooling_kind
        attributes["pooling_span"] = args.pooling_span
    manifest = {"pool_fingerprint": file_fingerprint(args.pool), "extractor_model": args.model,
                "max_tokens": args.max_tokens, "shards": shards, "attributes": attributes}
    with open(os.path.join(args.out_dir, args.manifest_name), "w") as f:
        json.dump(manifest, f, indent=2)
    return 0


def cmd_merge(args):
    parts = []
    for p in args.parts:
        with open(p) as f:
            parts.append(json.load(f))
    if os.path.dirname(os.path.abspath(args.out)) != os.path.dirname(os.path.abspath(args.parts[0])):
        raise SystemExit("merged manifest must live next to its parts")
    for key in ("pool_fingerprint", "extractor_model", "max_tokens"):
        if len({json.dumps(m[key]) for m in parts}) != 1:
            raise SystemExit("parts disagree on %s" % key)
    merged = dict(parts[0])
    merged["shards"] = sorted((s for m in parts for s in m["shards"]),
                              key=lambda s: (s["type"], s["start"]))
    attrs = dict(parts[0]["attributes"])
    for key in ("failures", "ifd_ineligible"):
        ids = sorted(int(x) for m in parts for x in m["attributes"].get(key, "").split(",") if x)
        attrs[key] = ",".join(map(str, ids))
    attrs["range"] = ",".join(m["attributes"]["range"] for m in parts)
    merged["attributes"] = attrs
    with open(args.out, "w") as f:
        json.dump(merged, f, indent=2)
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    run = sub.add_parser("run", help="extract features for a pool (or a range of it)")
    run.add_argument("--model", required=True)
    run.add_argument("--pool", required=True)
    run.add_argument("--out-dir", required=True)
    run.add_argument("--template", default="tulu", choices=("tulu", "plain"))
    run.add_argument("--max-tokens", type=int, default=2048)
    run.add_argument("--outputs", nargs="+", choices=OUTPUTS,
                     default=["hidden_states", "loss_records", "token_counts"])
    run.add_argument("--pooling-kind", default="weighted", choices=("weighted", "uniform", "eos_only"))
    run.add_argument("--pooling-span", default="full", choices=("full", "prompt_only", "label_only"))
    run.add_argument("--shard-rows", type=int, default=4096)
    run.add_argument("--batch-size", type=int, default=1,
                     help="samples per forward; kept at 1 so records never depend on batch mates")
    run.add_argument("--device", default="cpu")
    run.add_argument("--range", help="START:END slice of the pool for parallel workers")
    run.add_argument("--manifest-name", default="manifest.json")
    merge = sub.add_parser("merge", help="combine manifests written by range workers")
    merge.add_argument("--out", required=True)
    merge.add_argument("parts", nargs="+")
    args = ap.parse_args(argv)
    if args.cmd == "run":
        if args.batch_size != 1 or args.device != "cpu":
            print("note: forwards run one sample at a time on cpu", file=sys.stderr)
        return cmd_run(args)
    return cmd_merge(args)


if __name__ == "__main__":
    sys.exit(main())
