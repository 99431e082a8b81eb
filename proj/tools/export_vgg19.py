#!/usr/bin/env python3
"""Convert torchvision's ImageNet VGG-19 conv weights to a hep archive.

    python3 tools/export_vgg19.py out/vgg19.params

Needs torch + torchvision (downloads the weights on first use). Writes
conv{block}_{index}.weight (Cout, Cin, 3, 3) and .bias (1, Cout, 1, 1).
"""
import struct
import sys

BLOCKS = [2, 2, 4, 4, 4]


def layer_names():
    return [f"conv{b + 1}_{i + 1}" for b, n in enumerate(BLOCKS) for i in range(n)]


def write_archive(path, entries):
    with open(path, "wb") as f:
        f.write(b"HEPARCH1")
        f.write(struct.pack("<I", len(entries)))
        for name, shape, values in entries:
            raw = name.encode()
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<4i", *shape))
            f.write(struct.pack(f"<{len(values)}d", *values))


def main():
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    import torchvision

    model = torchvision.models.vgg19(weights=torchvision.models.VGG19_Weights.IMAGENET1K_V1)
    convs = [m for m in model.features if m.__class__.__name__ == "Conv2d"]
    names = layer_names()
    assert len(convs) == len(names)
    entries = []
    for name, conv in zip(names, convs):
        w = conv.weight.detach().double().contiguous()
        b = conv.bias.detach().double().contiguous()
        entries.append((name + ".weight", tuple(w.shape), w.flatten().tolist()))
        entries.append((name + ".bias", (1, b.shape[0], 1, 1), b.tolist()))
    write_archive(sys.argv[1], entries)
    print(f"wrote {len(entries)} tensors to {sys.argv[1]}")


if __name__ == "__main__":
    main()
