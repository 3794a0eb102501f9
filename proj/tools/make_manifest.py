#!/usr/bin/env python3
"""Build a recoseg dataset manifest from an image folder and a label folder.

Label PNGs must hold class indices (VOC SegmentationClass palettes and the
usual PASCAL Context 60-class conversions qualify). With --reduce-zero-label
index 0 becomes ignore (255) and every other index moves down by one; the
remapped labels are written to --out-labels.

Examples:
    make_manifest.py --dataset voc20 --images VOC2012/JPEGImages \\
        --labels VOC2012/SegmentationClass --list VOC2012/ImageSets/Segmentation/val.txt \\
        --out-labels voc20_labels --out voc20_val.json
    make_manifest.py --dataset voc21 ... --out voc21_val.json
    make_manifest.py --dataset pc59 --images VOC2010/JPEGImages \\
        --labels VOC2010/SegmentationClassContext --list val.txt \\
        --out-labels pc59_labels --out pc59_val.json
"""
import argparse
import json
import os

import numpy as np
from PIL import Image

VOC20 = [
    "aeroplane", "bicycle", "bird", "boat", "bottle", "bus", "car", "cat", "chair", "cow",
    "dining table", "dog", "horse", "motorbike", "person", "potted plant", "sheep", "sofa",
    "train", "tv monitor",
]
PC59 = [
    "aeroplane", "bag", "bed", "bedclothes", "bench", "bicycle", "bird", "boat", "book", "bottle",
    "building", "bus", "cabinet", "car", "cat", "ceiling", "chair", "cloth", "computer", "cow",
    "cup", "curtain", "dog", "door", "fence", "floor", "flower", "food", "grass", "ground",
    "horse", "keyboard", "light", "motorbike", "mountain", "mouse", "person", "plate", "platform",
    "potted plant", "road", "rock", "sheep", "shelves", "sidewalk", "sign", "sky", "snow", "sofa",
    "table", "track", "train", "tree", "truck", "tv monitor", "wall", "water", "window", "wood",
]
DATASETS = {
    "voc20": (VOC20, None, True),
    "voc21": (["background"] + VOC20, 0, False),
    "pc59": (PC59, None, True),
    "pc60": (["background"] + PC59, 0, False),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dataset", choices=sorted(DATASETS), required=True)
    ap.add_argument("--images", required=True)
    ap.add_argument("--labels", required=True)
    ap.add_argument("--list", help="file of image ids, one per line (default: every label)")
    ap.add_argument("--out", required=True)
    ap.add_argument("--out-labels", help="directory for remapped labels (needed when zero is dropped)")
    ap.add_argument("--split", default="val")
    ap.add_argument("--image-ext", default=".jpg")
    args = ap.parse_args()

    classes, background, reduce_zero = DATASETS[args.dataset]
    if reduce_zero and not args.out_labels:
        raise SystemExit(f"{args.dataset} drops index 0; pass --out-labels")

    if args.list:
        with open(args.list) as f:
            ids = [line.strip() for line in f if line.strip()]
    else:
        ids = sorted(os.path.splitext(n)[0] for n in os.listdir(args.labels) if n.endswith(".png"))

    root = os.path.dirname(os.path.abspath(args.out))
    pairs = []
    if args.out_labels:
        os.makedirs(args.out_labels, exist_ok=True)
    for i in ids:
        image = os.path.abspath(os.path.join(args.images, i + args.image_ext))
        label = os.path.abspath(os.path.join(args.labels, i + ".png"))
        if not os.path.exists(image) or not os.path.exists(label):
            raise SystemExit(f"missing pair for {i}")
        if reduce_zero:
            lbl = np.array(Image.open(label), dtype=np.int32)
            out = np.where(lbl == 0, 255, np.where(lbl == 255, 255, lbl - 1)).astype(np.uint8)
            label = os.path.abspath(os.path.join(args.out_labels, i + ".png"))
            Image.fromarray(out, mode="L").save(label)
        pairs.append([os.path.relpath(image, root), os.path.relpath(label, root)])

    manifest = {"root": ".", "split": args.split, "classes": classes, "ignore_index": 255, "pairs": pairs}
    if background is not None:
        manifest["background_index"] = background
    with open(args.out, "w") as f:
        json.dump(manifest, f, indent=1)
    print(f"{len(pairs)} pairs, {len(classes)} classes -> {args.out}")


if __name__ == "__main__":
    main()
