"""Equivalence of the half-spectrum engine with the public transforms."""

import numpy as np
import pytest

from slipchannel.grid import Parity
from slipchannel.engine import VEL_PARITIES, engine_for
from slipchannel.spectral import transform_forward, transform_inverse

from conftest import random_scalar, random_velocity


class TestEngineEquivalence:
    def test_forward_matches_public_transform(self, grid, rng):
        eng = engine_for(grid)
        samples = rng.standard_normal((3,) + grid.shape)
        samples[2, :, :, 0] = 0.0
        samples[2, :, :, -1] = 0.0
        half = eng.forward(samples, VEL_PARITIES)
        full = eng.to_full(half)
        for i, p in enumerate(VEL_PARITIES):
            ref = transform_forward(samples[i], p, grid)
            np.testing.assert_allclose(full[i], ref.coeffs, atol=1e-13)

    def test_inverse_matches_public_transform(self, grid, rng):
        eng = engine_for(grid)
        fields = [
            random_scalar(grid, p, rng) for p in VEL_PARITIES
        ]
        full = np.stack([f.coeffs for f in fields])
        half = eng.to_half(full)
        samples = eng.inverse(half, VEL_PARITIES)
        for i, f in enumerate(fields):
            np.testing.assert_allclose(samples[i], transform_inverse(f), atol=1e-13)

    def test_half_full_round_trip(self, grid, rng):
        eng = engine_for(grid)
        v = random_velocity(grid, rng)
        full = v.stack()
        np.testing.assert_array_equal(eng.to_full(eng.to_half(full)), full)

    def test_norms_match(self, grid, rng):
        from slipchannel.fields import h1_seminorm, l2_norm

        eng = engine_for(grid)
        v = random_velocity(grid, rng)
        half = eng.to_half(v.stack())
        assert eng.norm_sq(half) == pytest.approx(l2_norm(v) ** 2, rel=1e-12)
        assert eng.grad_norm_sq(half) == pytest.approx(h1_seminorm(v) ** 2, rel=1e-12)

    def test_projection_matches(self, grid, rng):
        from slipchannel.spectral import _project_stack

        eng = engine_for(grid)
        c = np.stack([
            random_scalar(grid, p, rng).coeffs for p in VEL_PARITIES
        ])
        ref = _project_stack(c, grid)
        got = eng.to_full(eng.project(eng.to_half(c)))
        np.testing.assert_allclose(got, ref, atol=1e-13)

    def test_curl_matches(self, grid, rng):
        from slipchannel.fields import curl

        eng = engine_for(grid)
        v = random_velocity(grid, rng)
        got = eng.to_full(eng.curl(eng.to_half(v.stack()), VEL_PARITIES))
        np.testing.assert_allclose(got, curl(v).stack(), atol=1e-13)
