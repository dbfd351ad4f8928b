"""The service layer without a network socket: content-addressed image
storage, job submission, polling, and the result cache.

Run: python3 demos/08_service_layer.py

The same state object backs the HTTP server started with
`chromatix serve`; the REST flow is:

    curl -X POST --data-binary @gray.png  host/api/images
    curl host/api/recommendations/{image_id}?k=5
    curl -X POST -d '{"target_id": ..., "reference_id": ...}' host/api/colorize
    curl host/api/jobs/{job_id}
    curl host/api/images/{result_id}.png
"""

import io
import tempfile
import time

import numpy as np
from PIL import Image

from chromatix.app import AppState
from chromatix.colornet import ColorNet, NetConfig
from chromatix.encoder import EncoderConfig, GrayEncoder
from chromatix.imagecolor import LabImage, lab_to_rgb


def png_bytes(rgb):
    buf = io.BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


rng = np.random.default_rng(0)
gray_png = png_bytes(np.repeat(rng.integers(40, 200, (32, 32, 1)), 3,
                               axis=2).astype(np.uint8))
color = LabImage(rng.uniform(20, 80, (32, 32)).astype(np.float32),
                 rng.uniform(-40, 40, (32, 32)).astype(np.float32),
                 rng.uniform(-40, 40, (32, 32)).astype(np.float32))
color_png = png_bytes(lab_to_rgb(color))

state_dir = tempfile.mkdtemp(prefix="chromatix_demo_")
state = AppState(
    encoder=GrayEncoder.random_init(EncoderConfig.toy(class_count=4), seed=7),
    net=ColorNet.random_init(NetConfig.toy(), seed=3),
    state_dir=state_dir,
)

# 1. Uploads are content-addressed: the id is the hash of the bytes, so
#    re-uploading is idempotent.
target_id = state.put_image(gray_png)
reference_id = state.put_image(color_png)
assert state.put_image(gray_png) == target_id
print("target id:   ", target_id[:16], "...")
print("reference id:", reference_id[:16], "...")

# 2. Jobs run on a bounded worker pool; poll until done.
job_id = state.submit_colorization(target_id, reference_id)
while state.jobs.get(job_id).state in ("queued", "running"):
    time.sleep(0.05)
job = state.jobs.get(job_id)
print(f"job {job.job_id[:8]}... finished: {job.state}, "
      f"result {job.result_id[:16]}...")

# 3. Resubmitting the same work hits the result cache and completes
#    immediately with the same result id.
job2_id = state.submit_colorization(target_id, reference_id)
job2 = state.jobs.get(job2_id)
print(f"resubmission state: {job2.state}, same result: "
      f"{job2.result_id == job.result_id}")

# 4. Everything survives a restart; blob hashes are verified on load.
state.persist()
state.shutdown()
reloaded = AppState(state_dir=state_dir)
reloaded.restore()
print(f"after restart: {len(reloaded.store.ids())} blobs verified, "
      f"job state {reloaded.jobs.get(job_id).state}")
reloaded.shutdown()
print("state directory:", state_dir)
