"""Regenerates tiny.safetensors with the reference safetensors writer."""

import json
import pathlib

import numpy as np
from safetensors.numpy import save_file

HERE = pathlib.Path(__file__).parent

tensors = {
    "wte": np.arange(6, dtype=np.float32).reshape(2, 3) / 4,
    "ln_f.bias": np.array([-1.5, 0.0, 2.25, 1e-7], dtype=np.float32),
    "scalar_row": np.array([[3.0]], dtype=np.float32),
}
save_file(tensors, str(HERE / "tiny.safetensors"), metadata={"format": "np"})
expected = {k: {"shape": list(v.shape), "data": [float(x) for x in v.flatten()]} for k, v in tensors.items()}
(HERE / "tiny_expected.json").write_text(json.dumps(expected, indent=1) + "\n")
