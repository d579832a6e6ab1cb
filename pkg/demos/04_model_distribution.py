"""Model distribution: container files, whole-model quantization, MD5
manifests, and checksum-verified download from a local test server.

Run: python3 demos/04_model_distribution.py
"""

import os
import tempfile
import threading
from functools import partial
from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from stlm import (
    ModelManifest,
    fetch_model,
    md5_file,
    quantize_model,
    read_model,
    write_model,
)
from stlm.fixtures import build_random_model
from stlm.transformer import DEFAULT_CONFIG

workdir = tempfile.mkdtemp(prefix="stlm-demo-")
print("working in", workdir)

# write a 16-bit model file
weights = build_random_model(DEFAULT_CONFIG, seed=0)
for name, value in list(weights.tensors.items()):
    weights[name] = np.asarray(value).astype(np.float16)
src = os.path.join(workdir, "assistant.f16.stlm")
write_model(weights, DEFAULT_CONFIG, src)
print("16-bit file:", os.path.getsize(src), "bytes")

# quantize it to q4
dst = os.path.join(workdir, "assistant.q4.stlm")
report = quantize_model(src, dst)
print(report.format_table())

# serve the quantized file locally and fetch it through the manifest flow
server = ThreadingHTTPServer(
    ("127.0.0.1", 0), partial(SimpleHTTPRequestHandler, directory=workdir)
)
threading.Thread(target=server.serve_forever, daemon=True).start()
port = server.server_address[1]

manifest = ModelManifest(
    url=f"http://127.0.0.1:{port}/assistant.q4.stlm",
    total_bytes=os.path.getsize(dst),
    md5_hex=md5_file(dst),
    name="assistant.q4.stlm",
)
dest_dir = os.path.join(workdir, "downloads")
path = fetch_model(
    manifest, dest_dir,
    progress=lambda done, total: print(f"  progress {done}/{total}", flush=True),
)
server.shutdown()
print("verified download at", path)

again = fetch_model(manifest, dest_dir)  # second call: checksum hit, no network
print("cache hit returns instantly:", again == path)

loaded, config = read_model(path)
print("loaded q4 model:", config.n_layers, "layers,", len(loaded.names()), "tensors")
