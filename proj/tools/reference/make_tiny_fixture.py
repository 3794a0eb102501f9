#!/usr/bin/env python3
"""Build a small randomly initialised open_clip model and freeze reference outputs.

The C++ test-suite compares its own forward passes against the tensors written
here. Everything is produced by open_clip / torch modules, so the fixture acts
as an independent reference implementation of the same architecture.

Usage: make_tiny_fixture.py OUT_DIR
"""
import json
import math
import os
import sys

import numpy as np
import open_clip
import torch
import torch.nn.functional as F
from open_clip.model import CLIPTextCfg, CLIPVisionCfg
from safetensors.torch import save_file

VISION = dict(layers=3, width=64, head_width=16, patch_size=16, image_size=64)
TEXT = dict(context_length=77, vocab_size=49408, width=32, heads=4, layers=2)
EMBED_DIM = 32

STRINGS = [
    "a photo of a dog.",
    "it's a dog's 3rd toy!!",
    "  Multiple   Spaces\tHere ",
    "traffic light",
    "café au lait, 2024",
    "we'll see what they've done",
]
CLASSES = ["dog", "traffic light", "potted plant"]


def dump(out_dir, name, tensor):
    arr = tensor.detach().to(torch.float32).contiguous().numpy()
    arr.astype("<f4").tofile(os.path.join(out_dir, name + ".bin"))
    with open(os.path.join(out_dir, name + ".json"), "w") as f:
        json.dump({"shape": list(arr.shape), "dtype": "float32", "layout": "row-major"}, f)


def make_model(image_size):
    vcfg = CLIPVisionCfg(**{**VISION, "image_size": image_size})
    return open_clip.model.CLIP(EMBED_DIM, vcfg, CLIPTextCfg(**TEXT), quick_gelu=True)


def heads_split(x, heads):
    # [T, W] -> [heads, T, W / heads]
    t, w = x.shape
    return x.reshape(t, heads, w // heads).permute(1, 0, 2).contiguous()


def vision_reference(model, image, out_dir, suffix):
    visual = model.visual
    heads = VISION["width"] // VISION["head_width"]
    with torch.no_grad():
        x = visual._embeds(image[None])
        for blk in visual.transformer.resblocks[:-1]:
            x = blk(x)
        dump(out_dir, "trunk_" + suffix, x[0])
        last = visual.transformer.resblocks[-1]
        h = last.ln_1(x)
        qkv = F.linear(h, last.attn.in_proj_weight, last.attn.in_proj_bias)[0]
        q, k, v = qkv.chunk(3, dim=-1)
        dump(out_dir, "q_" + suffix, heads_split(q, heads))
        dump(out_dir, "k_" + suffix, heads_split(k, heads))
        dump(out_dir, "v_" + suffix, heads_split(v, heads))
        y = last(x)
        y = visual.ln_post(y) @ visual.proj
        tokens = F.normalize(y[0, 1:], dim=-1)
        dump(out_dir, "tokens_" + suffix, tokens)


def main():
    out_dir = sys.argv[1]
    ref_dir = os.path.join(out_dir, "reference")
    os.makedirs(ref_dir, exist_ok=True)
    torch.manual_seed(1234)

    model = make_model(VISION["image_size"]).eval()
    # Stretch the tiny random init so that attention is not near-uniform and
    # the final block carries visible structure.
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith("in_proj_weight"):
                p.mul_(4.0)
            if name == "visual.positional_embedding" or name == "visual.class_embedding":
                p.mul_(8.0)
        # Round through fp16 so the stored checkpoint and the reference agree.
        for p in model.parameters():
            p.copy_(p.half().float())

    sd = {k: v.detach().half().contiguous() for k, v in model.state_dict().items()}
    save_file(sd, os.path.join(out_dir, "model.safetensors"))

    g = torch.Generator().manual_seed(99)
    image64 = torch.randn(3, 64, 64, generator=g)
    dump(ref_dir, "image_64", image64)
    vision_reference(model, image64, ref_dir, "64")

    # Larger input: positional table resized with bicubic interpolation.
    model96 = make_model(96).eval()
    sd96 = dict(model.state_dict())
    open_clip.model.resize_pos_embed(sd96, model96, interpolation="bicubic")
    model96.load_state_dict(sd96)
    image96 = torch.randn(3, 96, 96, generator=g)
    dump(ref_dir, "image_96", image96)
    vision_reference(model96, image96, ref_dir, "96")
    dump(ref_dir, "posembed_96", model96.visual.positional_embedding)

    tokenizer = open_clip.get_tokenizer("ViT-B-16")
    ids = tokenizer(STRINGS)
    with torch.no_grad():
        dump(ref_dir, "text_strings", model.encode_text(ids, normalize=True))

    templates = [t("{}") for t in open_clip.zero_shot_metadata.OPENAI_IMAGENET_TEMPLATES[:3]]
    rows = []
    with torch.no_grad():
        for c in CLASSES:
            emb = model.encode_text(tokenizer([t.format(c) for t in templates]), normalize=True)
            rows.append(F.normalize(emb.mean(dim=0), dim=-1))
    dump(ref_dir, "text_bank", torch.stack(rows))

    expected = {
        "vision": VISION,
        "text": TEXT,
        "embed_dim": EMBED_DIM,
        "tensor_count": len(sd),
        "parameter_count": int(sum(v.numel() for v in sd.values())),
        "logit_scale": float(model.logit_scale.exp().item()),
        "strings": STRINGS,
        "token_ids": [[int(t) for t in row if t != 0] for row in ids],
        "classes": CLASSES,
        "templates": templates,
    }
    with open(os.path.join(out_dir, "expected.json"), "w") as f:
        json.dump(expected, f, indent=2)


if __name__ == "__main__":
    main()
