import numpy as np
import pytest

from helpers import random_scene
from layoutdiff.gateway import (
    GatewayProtocolError,
    GatewayTransportError,
    RemoteDenoiser,
    StepRequest,
    ToyBackendServer,
    health_check,
    make_local_backend,
    remote_step,
)
from layoutdiff.orchestrator import Conditioning, GenerationConfig, generate_scene
from layoutdiff.raster import render_depth
from layoutdiff.toy import ToyDenoiser


@pytest.fixture(scope="module")
def server():
    with ToyBackendServer() as srv:
        yield srv


def random_latent(seed, shape=(4, 8, 8)):
    return np.random.default_rng(seed).standard_normal(shape).astype(np.float32)


class TestHealth:
    def test_descriptor(self, server):
        descriptor = health_check(server.endpoint)
        assert descriptor.name == "toy"
        assert descriptor.channels == 4
        assert descriptor.max_batch == 64

    def test_dead_endpoint_is_transport_error(self):
        with pytest.raises(GatewayTransportError):
            health_check("http://127.0.0.1:9", timeout=2.0)

    def test_channel_mismatch_fails_at_start(self, server):
        with pytest.raises(GatewayProtocolError, match="channels"):
            RemoteDenoiser(server.endpoint, expected_channels=8)


class TestRemoteStep:
    def test_single_matches_in_process(self, server):
        z = random_latent(0)
        cond = Conditioning("a cat")
        remote = remote_step(server.endpoint, [StepRequest("j", "p", 5, z, cond)])
        local = ToyDenoiser().step(z, 5, cond)
        assert np.array_equal(remote[0].latent, local)

    def test_with_depth_control_matches_in_process(self, server):
        scene = random_scene(np.random.default_rng(1), resolution=64)
        depth = render_depth(scene)
        z = random_latent(2)
        cond = Conditioning("a dog", control_depth=depth)
        remote = remote_step(server.endpoint, [StepRequest("j", "p", 3, z, cond)])
        local = ToyDenoiser().step(z, 3, cond)
        assert np.array_equal(remote[0].latent, local)

    def test_batch_equals_singles(self, server):
        z = random_latent(3)
        conds = [Conditioning(p) for p in ("one", "two", "three")]
        batch = remote_step(
            server.endpoint,
            [StepRequest("j", f"p{i}", 7, z, c) for i, c in enumerate(conds)],
        )
        singles = [
            remote_step(server.endpoint, [StepRequest("j", f"p{i}", 7, z, c)])[0]
            for i, c in enumerate(conds)
        ]
        for got, want in zip(batch, singles):
            assert np.array_equal(got.latent, want.latent)

    def test_order_preserved(self, server):
        z = random_latent(4)
        conds = [Conditioning(p) for p in ("alpha", "beta")]
        out = remote_step(
            server.endpoint,
            [StepRequest("j", f"path-{i}", 2, z, c) for i, c in enumerate(conds)],
        )
        toy = ToyDenoiser()
        assert np.array_equal(out[0].latent, toy.step(z, 2, conds[0]))
        assert np.array_equal(out[1].latent, toy.step(z, 2, conds[1]))

    def test_empty_batch_rejected(self, server):
        with pytest.raises(ValueError):
            remote_step(server.endpoint, [])

    def test_unreachable_endpoint(self):
        z = random_latent(5)
        with pytest.raises(GatewayTransportError, match="timestep 0"):
            remote_step("http://127.0.0.1:9", [StepRequest("j", "p", 0, z, Conditioning("x"))], timeout=2.0)

    def test_server_error_carries_context(self, server):
        z = random_latent(6)
        bad = Conditioning("x", reference_id="not-a-reference")
        with pytest.raises(GatewayProtocolError, match="HTTP 400"):
            remote_step(server.endpoint, [StepRequest("j", "p", 1, z, bad)])


class TestTransparency:
    @pytest.mark.parametrize("seed", [0, 1])
    def test_orchestrated_generation_bit_identical(self, server, seed):
        scene = random_scene(np.random.default_rng(800 + seed), n_boxes=2, resolution=64)
        config = GenerationConfig(steps=20, seed=seed)
        # must share the server denoiser's schedule for bit-equality
        local = generate_scene(scene, ToyDenoiser(), config)
        remote = generate_scene(scene, RemoteDenoiser(server.endpoint, expected_channels=4), config)
        assert np.array_equal(local, remote)

    def test_local_backend_registry(self):
        assert make_local_backend("toy").name == "toy"
        with pytest.raises(KeyError):
            make_local_backend("gpu")
