"""Drive the orchestrator through the wire protocol against a loopback server.

The denoiser contract crosses the wire as JSON + base64 float32 payloads:
POST /v1/step takes a batch of per-path step requests, GET /v1/health
returns the backend descriptor.  Payload bytes carry exactness: a loopback
toy backend reproduces in-process generation bit-for-bit.
"""

import numpy as np

from layoutdiff import Camera, GenerationConfig, ObjectSpec, OrientedBox, Scene, generate_scene
from layoutdiff.gateway import RemoteDenoiser, ToyBackendServer, health_check
from layoutdiff.toy import ToyDenoiser

scene = Scene(
    camera=Camera.default(128, 128),
    objects=(ObjectSpec(OrientedBox("orb", (0.0, 0.0, 5.0), (1.5, 1.5, 1.5)), "a glass orb"),),
    background_prompt="a dark stage",
)
config = GenerationConfig(steps=40, seed=21)

with ToyBackendServer() as server:
    descriptor = health_check(server.endpoint)
    print(f"backend at {server.endpoint}: name={descriptor.name} "
          f"channels={descriptor.channels} max_batch={descriptor.max_batch}")

    remote = RemoteDenoiser(server.endpoint, expected_channels=4)
    over_the_wire = generate_scene(scene, remote, config)

in_process = generate_scene(scene, ToyDenoiser(), config)
print("remote output bit-identical to in-process:", bool(np.array_equal(over_the_wire, in_process)))
