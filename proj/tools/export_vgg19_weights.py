#!/usr/bin/env python3
"""Convert torchvision VGG-19 weights into a .vggw archive for nustyle.

    python3 tools/export_vgg19_weights.py --output vgg19.vggw
    python3 tools/export_vgg19_weights.py --output tiny.vggw --tiny-random 3

The first form loads the ImageNet weights through torchvision (downloaded on
first use). --tiny-random writes a narrow network with the same topology and
random weights, which is what the test suite uses.
"""

import argparse
import struct
import sys
import zlib

import torch
from torch import nn

BLOCKS = (2, 2, 4, 4, 4)
FULL_WIDTHS = (64, 128, 256, 512, 512)
TINY_WIDTHS = (4, 6, 8, 8, 8)
MAGIC = b"VGGW"
VERSION = 1


def conv_names():
    return [f"conv{b + 1}_{i + 1}" for b, n in enumerate(BLOCKS) for i in range(n)]


class TinyVgg(nn.Module):
    """VGG-19 topology with configurable widths and a head sized for input_size."""

    def __init__(self, widths, input_size, classes, hidden):
        super().__init__()
        layers, c = [], 3
        for b, n in enumerate(BLOCKS):
            for _ in range(n):
                layers += [nn.Conv2d(c, widths[b], 3, padding=1), nn.ReLU()]
                c = widths[b]
            layers.append(nn.MaxPool2d(2))
        self.features = nn.Sequential(*layers)
        spatial = input_size // 32
        self.classifier = nn.Sequential(
            nn.Linear(c * spatial * spatial, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
            nn.Linear(hidden, classes))
        self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))

    def forward(self, x):
        x = self.features((x - self.mean) / self.std)
        return self.classifier(torch.flatten(x, 1))


def named_tensors(features, classifier):
    convs = [m for m in features if isinstance(m, nn.Conv2d)]
    denses = [m for m in classifier if isinstance(m, nn.Linear)]
    if len(convs) != 16 or len(denses) != 3:
        raise ValueError("expected 16 convolutions and 3 dense layers")
    out = []
    for name, m in list(zip(conv_names(), convs)) + list(zip(("fc6", "fc7", "fc8"), denses)):
        out.append((name + ".weight", m.weight.detach()))
        out.append((name + ".bias", m.bias.detach()))
    return out


def encode(tensors, input_size, class_count):
    body = bytearray(MAGIC)
    body += struct.pack("<4I", VERSION, input_size, class_count, len(tensors))
    for name, t in tensors:
        raw = name.encode()
        body += struct.pack("<I", len(raw)) + raw
        body += struct.pack("<I", t.dim()) + struct.pack(f"<{t.dim()}I", *t.shape)
        body += t.to(torch.float32).contiguous().numpy().astype("<f4").tobytes()
    body += struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    return bytes(body)


def tiny_model(seed, input_size=32, classes=10, hidden=16):
    torch.manual_seed(seed)
    model = TinyVgg(TINY_WIDTHS, input_size, classes, hidden).eval()
    for m in model.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight)
            nn.init.normal_(m.bias, std=0.05)
    return model


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--output", required=True)
    parser.add_argument("--tiny-random", type=int, metavar="SEED")
    args = parser.parse_args(argv)

    if args.tiny_random is not None:
        model = tiny_model(args.tiny_random)
        data = encode(named_tensors(model.features, model.classifier), 32, 10)
    else:
        from torchvision.models import VGG19_Weights, vgg19
        model = vgg19(weights=VGG19_Weights.IMAGENET1K_V1).eval()
        data = encode(named_tensors(model.features, model.classifier), 224, 1000)

    with open(args.output, "wb") as f:
        f.write(data)
    print(f"wrote {args.output} ({len(data)} bytes, crc32 {struct.unpack('<I', data[-4:])[0]:08x})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
