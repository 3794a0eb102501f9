#!/usr/bin/env python3
"""Write reference patch tokens from open_clip for the forward-parity check.

For each image the pixel tensor fed to the model and the L2-normalised,
projected patch tokens of the unmodified vision tower are dumped in the
recoseg tensor format, with an index in parity.json:

    {"model": ..., "side": 224, "images": [{"name": ..., "pixels": ..., "tokens": ...}]}

Optionally also exports the loaded state dict as safetensors so that
`recoseg convert` can build the matching weight directory.

Usage:
    dump_reference.py --images DIR --out DIR [--count 10] [--side 224]
                      [--model ViT-B-16] [--pretrained openai]
                      [--export-safetensors model.safetensors]
"""
import argparse
import json
import os

import open_clip
import torch
import torch.nn.functional as F
from PIL import Image

MEAN = (0.48145466, 0.4578275, 0.40821073)
STD = (0.26862954, 0.26130258, 0.27577711)


def dump(out_dir, name, tensor):
    arr = tensor.detach().to(torch.float32).contiguous().numpy()
    arr.astype("<f4").tofile(os.path.join(out_dir, name + ".bin"))
    with open(os.path.join(out_dir, name + ".json"), "w") as f:
        json.dump({"shape": list(arr.shape), "dtype": "float32", "layout": "row-major"}, f)


def pixels_of(path, side):
    image = Image.open(path).convert("RGB").resize((side, side), Image.BICUBIC)
    x = torch.frombuffer(bytearray(image.tobytes()), dtype=torch.uint8).float() / 255.0
    x = x.reshape(side, side, 3).permute(2, 0, 1)
    return (x - torch.tensor(MEAN)[:, None, None]) / torch.tensor(STD)[:, None, None]


def reference_tokens(model, pixels):
    visual = model.visual
    with torch.no_grad():
        x = visual._embeds(pixels[None])
        x = visual.transformer(x)
        y = visual.ln_post(x) @ visual.proj
        return F.normalize(y[0, 1:], dim=-1)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--images", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--count", type=int, default=10)
    ap.add_argument("--side", type=int, default=224)
    ap.add_argument("--model", default="ViT-B-16")
    ap.add_argument("--pretrained", default="openai")
    ap.add_argument("--export-safetensors")
    args = ap.parse_args()

    model, _, _ = open_clip.create_model_and_transforms(args.model, pretrained=args.pretrained)
    model = model.float().eval()
    if args.export_safetensors:
        from safetensors.torch import save_file

        sd = {k: v.detach().contiguous() for k, v in model.state_dict().items()}
        save_file(sd, args.export_safetensors)

    if args.side != model.visual.image_size[0]:
        raise SystemExit("parity dumps use the native input size")

    os.makedirs(args.out, exist_ok=True)
    names = sorted(n for n in os.listdir(args.images) if n.lower().endswith((".jpg", ".jpeg", ".png")))
    index = {"model": args.model, "side": args.side, "images": []}
    for i, name in enumerate(names[: args.count]):
        pixels = pixels_of(os.path.join(args.images, name), args.side)
        dump(args.out, f"pixels_{i}", pixels)
        dump(args.out, f"tokens_{i}", reference_tokens(model, pixels))
        index["images"].append({"name": name, "pixels": f"pixels_{i}", "tokens": f"tokens_{i}"})
    with open(os.path.join(args.out, "parity.json"), "w") as f:
        json.dump(index, f, indent=2)
    print(f"wrote {len(index['images'])} reference images to {args.out}")


if __name__ == "__main__":
    main()
