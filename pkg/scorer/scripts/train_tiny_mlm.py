"""Train the tiny BERT-style MLM committed under tests/data/tiny-mlm.

The test suite needs a genuinely trained masked LM but must run
offline, so we train a miniature one (2 layers, 64 hidden) on the
synthetic corpus in tests/data/train_corpus.txt and commit the result.
Deterministic: fixed seeds, CPU only.

    python3 scripts/train_tiny_mlm.py tests/data/train_corpus.txt tests/data/tiny-mlm
"""

from __future__ import annotations

import random
import sys

import torch
import torch.nn.functional as F
from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors, trainers
from transformers import BertConfig, BertForMaskedLM, BertTokenizerFast

SEED = 17
VOCAB_SIZE = 1536
MASK_RATE = 0.15
STEPS = 4000
BATCH = 32
LR = 5e-4
MAX_LEN = 48
# Label smoothing bounds the model's minimum token probability, keeping
# exp(-log_prob_sum / word_count) far from float64 overflow even on
# heavily corrupted input.
SMOOTHING = 0.1


def build_tokenizer(lines: list[str]) -> BertTokenizerFast:
    tok = Tokenizer(models.WordPiece(unk_token="[UNK]"))
    tok.normalizer = normalizers.BertNormalizer(lowercase=True)
    tok.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    trainer = trainers.WordPieceTrainer(
        vocab_size=VOCAB_SIZE,
        special_tokens=["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"],
    )
    tok.train_from_iterator(lines, trainer)
    cls_id = tok.token_to_id("[CLS]")
    sep_id = tok.token_to_id("[SEP]")
    tok.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", cls_id), ("[SEP]", sep_id)],
    )
    fast = BertTokenizerFast(tokenizer_object=tok)
    fast.model_max_length = 128
    return fast


def encode_corpus(tokenizer: BertTokenizerFast, lines: list[str]) -> list[list[int]]:
    encoded = []
    for line in lines:
        ids = tokenizer(line, truncation=True, max_length=MAX_LEN)["input_ids"]
        if len(ids) > 4:
            encoded.append(ids)
    return encoded


def mask_batch(batch, tokenizer, rng, generator):
    pad_id = tokenizer.pad_token_id
    mask_id = tokenizer.mask_token_id
    width = max(len(ids) for ids in batch)
    input_ids = torch.full((len(batch), width), pad_id, dtype=torch.long)
    attention = torch.zeros((len(batch), width), dtype=torch.long)
    labels = torch.full((len(batch), width), -100, dtype=torch.long)
    for r, ids in enumerate(batch):
        input_ids[r, : len(ids)] = torch.tensor(ids)
        attention[r, : len(ids)] = 1
        for pos in range(1, len(ids) - 1):  # skip [CLS]/[SEP]
            if rng.random() < MASK_RATE:
                labels[r, pos] = ids[pos]
                roll = rng.random()
                if roll < 0.8:
                    input_ids[r, pos] = mask_id
                elif roll < 0.9:
                    input_ids[r, pos] = int(
                        torch.randint(5, len(tokenizer), (1,), generator=generator)
                    )
    return input_ids, attention, labels


def main() -> int:
    corpus_path, out_dir = sys.argv[1], sys.argv[2]
    random.seed(SEED)
    torch.manual_seed(SEED)
    generator = torch.Generator().manual_seed(SEED)
    rng = random.Random(SEED)

    with open(corpus_path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    tokenizer = build_tokenizer(lines)
    sequences = encode_corpus(tokenizer, lines)
    print(f"{len(sequences)} sequences, vocab {len(tokenizer)}")

    config = BertConfig(
        vocab_size=len(tokenizer),
        hidden_size=64,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=128,
        max_position_embeddings=128,
        pad_token_id=tokenizer.pad_token_id,
    )
    model = BertForMaskedLM(config)
    model.train()
    optimizer = torch.optim.AdamW(model.parameters(), lr=LR)

    for step in range(STEPS):
        batch = [sequences[rng.randrange(len(sequences))] for _ in range(BATCH)]
        input_ids, attention, labels = mask_batch(batch, tokenizer, rng, generator)
        logits = model(input_ids=input_ids, attention_mask=attention).logits
        loss = F.cross_entropy(
            logits.view(-1, logits.size(-1)),
            labels.view(-1),
            ignore_index=-100,
            label_smoothing=SMOOTHING,
        )
        loss.backward()
        optimizer.step()
        optimizer.zero_grad()
        if step % 500 == 0 or step == STEPS - 1:
            print(f"step {step:5d}  loss {float(loss):.4f}")

    model.eval()
    tokenizer.save_pretrained(out_dir)
    model.save_pretrained(out_dir)
    print(f"saved to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
