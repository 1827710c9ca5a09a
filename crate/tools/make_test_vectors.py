"""Writes a small model in the text format plus inputs and the numpy forward
pass on them. Both the Rust crate and any other reader of the format check
themselves against these files."""

import json
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "crates" / "core" / "tests" / "fixtures"

INPUT_DIM, HIDDEN_DIM, CLASS_COUNT = 16, 5, 3
EPSILON = 1e-5


def forward(p, x):
    z = x @ p["layer1.weight"] + p["layer1.bias"]
    norm = (z - p["norm.running_mean"]) / np.sqrt(p["norm.running_variance"] + EPSILON)
    a = np.maximum(p["norm.scale"] * norm + p["norm.shift"], 0.0)
    logits = a @ p["layer2.weight"] + p["layer2.bias"]
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def write_model(path, p):
    lines = [
        "# generated by tools/make_test_vectors.py",
        "format maid-model",
        "version 1",
        f"input_dim {INPUT_DIM}",
        f"hidden_dim {HIDDEN_DIM}",
        f"class_count {CLASS_COUNT}",
        "seed 2024",
        f"norm.epsilon {EPSILON:.16e}",
    ]
    for key in [
        "layer1.weight",
        "layer1.bias",
        "norm.running_mean",
        "norm.running_variance",
        "norm.scale",
        "norm.shift",
        "layer2.weight",
        "layer2.bias",
    ]:
        lines.append(key + "".join(f" {v:.16e}" for v in p[key].ravel()))
    lines.append("end")
    path.write_text("\n".join(lines) + "\n")


def main():
    rng = np.random.default_rng(2024)
    p = {
        "layer1.weight": rng.normal(0, 0.5, (INPUT_DIM, HIDDEN_DIM)),
        "layer1.bias": rng.normal(0, 0.1, HIDDEN_DIM),
        "norm.running_mean": rng.normal(0, 0.3, HIDDEN_DIM),
        "norm.running_variance": rng.uniform(0.2, 2.0, HIDDEN_DIM),
        "norm.scale": rng.uniform(0.5, 1.5, HIDDEN_DIM),
        "norm.shift": rng.normal(0, 0.2, HIDDEN_DIM),
        "layer2.weight": rng.normal(0, 0.8, (HIDDEN_DIM, CLASS_COUNT)),
        "layer2.bias": rng.normal(0, 0.1, CLASS_COUNT),
    }
    # inputs are 4x4 images with 8-bit intensities
    x = rng.integers(0, 256, (12, INPUT_DIM)) / 255.0
    probs = forward(p, x)
    OUT.mkdir(parents=True, exist_ok=True)
    write_model(OUT / "shared_model.txt", p)
    vectors = {
        "inputs": x.tolist(),
        "probabilities": probs.tolist(),
        "hidden_preactivations": (x @ p["layer1.weight"] + p["layer1.bias"]).tolist(),
    }
    (OUT / "shared_vectors.json").write_text(json.dumps(vectors, indent=1) + "\n")


if __name__ == "__main__":
    main()
