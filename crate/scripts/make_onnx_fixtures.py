"""Writes tiny ONNX models, tokenizers, manifests and reference outputs
used by the runtime integration tests.

    python3 scripts/make_onnx_fixtures.py crates/core/tests/fixtures/onnx
"""

import json
import sys
from pathlib import Path

import torch
from tokenizers import Tokenizer, models, pre_tokenizers, processors

WORDS = (
    "i me my we us our team club family brother sister love the a is are and "
    "in of to with stand one party london acme corp google paris they people"
).split()
SPECIAL = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
HIDDEN = 8
MAX_LEN = 32
NER_LABELS = ["O", "B-ORG", "I-ORG", "B-GPE", "I-GPE"]
PROBES = [
    "i love my team",
    "we stand with our family",
    "the club is one family and i love it",
    "acme corp and google are in london",
]


def tokenizer():
    vocab = {t: i for i, t in enumerate(SPECIAL + WORDS)}
    tok = Tokenizer(models.WordLevel(vocab, unk_token="[UNK]"))
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    tok.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    tok.add_special_tokens(SPECIAL)
    return tok


class Encoder(torch.nn.Module):
    """Embedding plus one masked mean-context mixing layer."""

    def __init__(self, vocab):
        super().__init__()
        self.emb = torch.nn.Embedding(vocab, HIDDEN)
        self.pos = torch.nn.Embedding(MAX_LEN, HIDDEN)
        self.mix = torch.nn.Linear(2 * HIDDEN, HIDDEN)

    def forward(self, input_ids, attention_mask):
        n = input_ids.shape[1]
        h = self.emb(input_ids) + self.pos.weight[:n].unsqueeze(0)
        m = attention_mask.unsqueeze(-1).to(h.dtype)
        ctx = (h * m).sum(1, keepdim=True) / m.sum(1, keepdim=True)
        return torch.tanh(self.mix(torch.cat([h, ctx.expand_as(h)], -1)))


class MaskedLm(torch.nn.Module):
    def __init__(self, vocab):
        super().__init__()
        self.enc = Encoder(vocab)
        self.head = torch.nn.Linear(HIDDEN, vocab)

    def forward(self, input_ids, attention_mask):
        return self.head(self.enc(input_ids, attention_mask))


class Tagger(torch.nn.Module):
    def __init__(self, vocab):
        super().__init__()
        self.enc = Encoder(vocab)
        self.head = torch.nn.Linear(HIDDEN, len(NER_LABELS))

    def forward(self, input_ids, attention_mask):
        return self.head(self.enc(input_ids, attention_mask))


class Classifier(torch.nn.Module):
    def __init__(self, vocab):
        super().__init__()
        self.enc = Encoder(vocab)
        self.head = torch.nn.Linear(HIDDEN, 3)

    def forward(self, input_ids, attention_mask):
        return self.head(self.enc(input_ids, attention_mask)[:, 0])


def export(model, path, out_name):
    ids = torch.tensor([[2, 5, 6, 3]])
    mask = torch.ones_like(ids)
    torch.onnx.export(
        model,
        (ids, mask),
        path,
        input_names=["input_ids", "attention_mask"],
        output_names=[out_name],
        dynamic_axes={"input_ids": {1: "seq"}, "attention_mask": {1: "seq"}, out_name: {1: "seq"}},
        opset_version=14,
        dynamo=False,
    )


def main(out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(7)
    tok = tokenizer()
    tok.save(str(out / "tokenizer.json"))
    vocab = tok.get_vocab_size()

    def run(model, text):
        enc = tok.encode(text)
        ids = torch.tensor([enc.ids])
        with torch.no_grad():
            return model(ids, torch.ones_like(ids)), enc

    mlm = MaskedLm(vocab).eval()
    with torch.no_grad():
        # make [MASK] predictions depend strongly on context
        mlm.head.weight.mul_(4.0)
    export(mlm, out / "masked_lm.onnx", "logits")
    mlm_ref = []
    for text in PROBES:
        words = text.split()
        masked = " ".join(["[MASK]"] + words[1:])
        logits, enc = run(mlm, masked)
        probs = torch.softmax(logits[0, 1], -1)
        mlm_ref.append({"text": text, "masked": masked, "ids": enc.ids, "probs": probs.tolist()})

    enc_model = Encoder(vocab).eval()
    export(enc_model, out / "sentence_encoder.onnx", "last_hidden_state")
    enc_ref = []
    for text in PROBES:
        h, _ = run(enc_model, text)
        v = h[0].mean(0)
        v = v / v.norm()
        enc_ref.append({"text": text, "vector": v.tolist()})

    clf = Classifier(vocab).eval()
    export(clf, out / "classifier.onnx", "logits")
    clf_ref = []
    for text in PROBES:
        logits, _ = run(clf, text)
        clf_ref.append({"text": text, "probs": torch.softmax(logits[0], -1).tolist()})

    tagger = Tagger(vocab).eval()
    with torch.no_grad():
        # the tagger is rigged rather than trained: entity words get fixed tags
        tagger.head.weight.zero_()
        tagger.head.bias.copy_(torch.tensor([1.0, 0, 0, 0, 0]))
        tagger.enc.emb.weight.zero_()
        tagger.enc.pos.weight.zero_()
        tagger.enc.mix.weight.zero_()
        tagger.enc.mix.bias.zero_()
        tagger.enc.mix.weight[:, :HIDDEN] = torch.eye(HIDDEN) * 5
        v = tok.get_vocab()
        for word, dim in [("acme", 1), ("corp", 2), ("london", 3), ("google", 1), ("paris", 3)]:
            tagger.enc.emb.weight[v[word], dim] = 1.0
        tagger.head.weight[1:, 1:5] = torch.eye(4) * 10
    export(tagger, out / "ner.onnx", "logits")

    base = {
        "source_checkpoint": "synthetic/tiny",
        "tokenizer_path": "tokenizer.json",
        "vocab_size": vocab,
        "hidden_size": HIDDEN,
        "max_sequence_length": MAX_LEN,
    }
    manifests = {
        "masked_lm": {"role": "masked_lm", "model_path": "masked_lm.onnx", "mask_token": "[MASK]"},
        "sentence_encoder": {
            "role": "sentence_encoder",
            "model_path": "sentence_encoder.onnx",
            "pooling": "mean",
            "normalize": True,
        },
        "classifier": {
            "role": "encoder_classifier",
            "model_path": "classifier.onnx",
            "labels": ["low", "medium", "high"],
        },
        "ner": {"role": "ner", "model_path": "ner.onnx", "labels": NER_LABELS},
    }
    for name, m in manifests.items():
        (out / f"{name}.manifest.json").write_text(json.dumps({**base, **m}, indent=2) + "\n")
    (out / "reference.json").write_text(
        json.dumps({"masked_lm": mlm_ref, "sentence_encoder": enc_ref, "classifier": clf_ref}) + "\n"
    )


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures/onnx")
