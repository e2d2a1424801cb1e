"""Writes a small TorchScript feature extractor used to exercise the plug-in path."""

import sys

import torch


class Extractor(torch.nn.Module):
    def __init__(self):
        super().__init__()
        torch.manual_seed(0)
        self.stages = torch.nn.ModuleList(
            [torch.nn.Conv2d(c_in, c_out, 3, stride=2, padding=1) for c_in, c_out in [(3, 8), (8, 8), (8, 16), (16, 16)]]
        )

    def forward(self, x):
        features = []
        for stage in self.stages:
            x = torch.relu(stage(x))
            features.append(x)
        return features


if __name__ == "__main__":
    torch.jit.script(Extractor()).save(sys.argv[1])
