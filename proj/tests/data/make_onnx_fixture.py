"""Regenerates small_cnn.onnx and small_cnn_expected.json.

The expected outputs are computed by onnxruntime on deterministic inputs
(see probe_input) so the C++ graph interpreter can be checked against them.
"""
import json
import math
import pathlib

import numpy as np
import onnxruntime as ort
import torch

HERE = pathlib.Path(__file__).resolve().parent


def probe_input(k, size=128):
    r = np.arange(size, dtype=np.float64)[:, None]
    c = np.arange(size, dtype=np.float64)[None, :]
    x = np.sin(0.11 * (k + 1) * r + 0.07 * c) * np.cos(0.05 * c - 0.03 * k * r)
    return (x - x.mean()).astype(np.float32)


class SmallCnn(torch.nn.Module):
    def __init__(self, n_params=2):
        super().__init__()
        layers = []
        ch = 1
        for out in (8, 8, 16, 16, 16):
            layers += [torch.nn.Conv2d(ch, out, 3, padding=1), torch.nn.BatchNorm2d(out),
                       torch.nn.LeakyReLU(0.1), torch.nn.MaxPool2d(2)]
            ch = out
        self.features = torch.nn.Sequential(*layers)
        self.head = torch.nn.Sequential(torch.nn.Flatten(), torch.nn.Linear(16 * 4 * 4, 32),
                                        torch.nn.ReLU(), torch.nn.Linear(32, n_params))

    def forward(self, x):
        return self.head(self.features(x))


def main():
    torch.manual_seed(3)
    model = SmallCnn().eval()
    with torch.no_grad():
        for m in model.modules():
            if isinstance(m, torch.nn.BatchNorm2d):
                m.running_mean.uniform_(-0.1, 0.1)
                m.running_var.uniform_(0.5, 1.5)
    path = HERE / "small_cnn.onnx"
    torch.onnx.export(model, torch.zeros(1, 1, 128, 128), str(path), input_names=["patch"],
                      output_names=["coeffs"], opset_version=13,
                      dynamic_axes={"patch": {0: "batch"}, "coeffs": {0: "batch"}}, dynamo=False)
    sess = ort.InferenceSession(str(path))
    cases = []
    for k in range(3):
        x = probe_input(k)[None, None]
        y = sess.run(["coeffs"], {"patch": x})[0]
        with torch.no_grad():
            t = model(torch.from_numpy(x)).numpy()
        assert np.allclose(y, t, atol=1e-5)
        cases.append({"k": k, "coeffs": [float(v) for v in y[0]]})
    (HERE / "small_cnn_expected.json").write_text(json.dumps({"cases": cases}, indent=1) + "\n")


if __name__ == "__main__":
    main()
