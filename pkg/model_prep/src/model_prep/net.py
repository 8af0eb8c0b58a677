"""The toy classifier: two conv blocks and a linear head.

Small enough for seconds-scale inference campaigns, deep enough that a
strong color overlay moves its features.
"""
from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .onnx_writer import GraphBuilder

INPUT_SIZE = 32
MEAN = (0.5, 0.5, 0.5)
STD = (0.5, 0.5, 0.5)


class ToyNet(nn.Module):
    def __init__(self, classes: int = 10, width: int = 8):
        super().__init__()
        self.conv1 = nn.Conv2d(3, width, 3, padding=1)
        self.conv2 = nn.Conv2d(width, 2 * width, 3, padding=1)
        self.pool = nn.MaxPool2d(2, 2)
        self.fc = nn.Linear(2 * width * 8 * 8, classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.pool(torch.relu(self.conv1(x)))
        x = self.pool(torch.relu(self.conv2(x)))
        return self.fc(torch.flatten(x, 1))


def normalize(images_u8: np.ndarray) -> torch.Tensor:
    """NxHxWx3 uint8 -> Nx3xHxW float tensor, the exported pipeline."""
    x = images_u8.astype(np.float32) / 255.0
    x = (x - np.asarray(MEAN, np.float32)) / np.asarray(STD, np.float32)
    return torch.from_numpy(np.ascontiguousarray(x.transpose(0, 3, 1, 2)))


def serialize_net(net: ToyNet, classes: int = 10) -> bytes:
    """Emit the trained weights as an inference graph ending in Softmax."""
    params = {k: v.detach().cpu().numpy().astype(np.float32)
              for k, v in net.state_dict().items()}
    g = GraphBuilder("toynet")
    g.add_input("input", [1, 3, INPUT_SIZE, INPUT_SIZE])
    g.add_output("scores", [1, classes])

    g.add_initializer("conv1_w", params["conv1.weight"])
    g.add_initializer("conv1_b", params["conv1.bias"])
    g.add_initializer("conv2_w", params["conv2.weight"])
    g.add_initializer("conv2_b", params["conv2.bias"])
    g.add_initializer("fc_w", params["fc.weight"])
    g.add_initializer("fc_b", params["fc.bias"])

    conv_attrs = {"kernel_shape": [3, 3], "strides": [1, 1], "pads": [1, 1, 1, 1]}
    pool_attrs = {"kernel_shape": [2, 2], "strides": [2, 2]}
    g.add_node("Conv", ["input", "conv1_w", "conv1_b"], ["c1"], conv_attrs)
    g.add_node("Relu", ["c1"], ["r1"])
    g.add_node("MaxPool", ["r1"], ["p1"], pool_attrs)
    g.add_node("Conv", ["p1", "conv2_w", "conv2_b"], ["c2"], conv_attrs)
    g.add_node("Relu", ["c2"], ["r2"])
    g.add_node("MaxPool", ["r2"], ["p2"], pool_attrs)
    g.add_node("Flatten", ["p2"], ["flat"], {"axis": 1})
    g.add_node("Gemm", ["flat", "fc_w", "fc_b"], ["logits"], {"transB": 1})
    g.add_node("Softmax", ["logits"], ["scores"], {"axis": 1})
    return g.serialize()
