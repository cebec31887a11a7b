# tests/test_synthetic.py

import numpy as np
import pytest
from numpy.testing import assert_allclose

from backend.entity import ActivationSpec, AxisKeyframe, Blob, Bump, SourceSpec
from backend.errors import DimensionMismatchError, InvalidSpecError
from backend.quaternion import QuaternionMatrix
from backend.sources.synthetic import (
    AXIS_ONE,
    AXIS_TWO,
    SyntheticSource,
    assemble,
    axis_profile,
    sufficient_instance,
    constant_polarization_pair,
    desk_scale_activations,
    desk_scale_sources,
    gen_activations,
    gen_activations_with_witnesses,
    gen_sources,
    intensity_profile,
)
from backend.stokes import in_cone_array, polarization_components


def test_sources_follow_requested_polarization():
    W = gen_sources(constant_polarization_pair(64))
    intensity, dop, axis = polarization_components(W.data)
    assert W.shape == (64, 2)
    assert np.all(intensity > 0.0)
    assert_allclose(dop[:, 0], 0.7)
    assert_allclose(dop[:, 1], 0.5)
    assert_allclose(axis[:, 0], np.broadcast_to(AXIS_ONE, (64, 3)), atol=1e-12)
    assert_allclose(axis[:, 1], np.broadcast_to(AXIS_TWO, (64, 3)), atol=1e-12)


def test_desk_scale_sources_are_fully_polarized_and_non_vanishing():
    W = gen_sources(desk_scale_sources(128))
    intensity, dop, axis = polarization_components(W.data)
    assert W.shape == (128, 3)
    assert np.all(intensity >= 0.1)
    assert_allclose(dop, 1.0)
    # 轴随波段变化
    assert not np.allclose(axis[0], axis[-1])
    assert np.all(in_cone_array(W.data))


def test_intensity_profile_is_floor_plus_bumps():
    spec = SourceSpec(num_bands=11, intensity_profile=(Bump(5.0, 2.0, 1.0),), intensity_floor=0.1)
    profile = intensity_profile(spec)
    assert profile[5] == pytest.approx(1.1)
    assert profile[0] == pytest.approx(0.1 + np.exp(-0.5 * 6.25))
    assert np.argmax(profile) == 5


def test_axis_keyframes_are_interpolated_and_normalized():
    spec = SourceSpec(
        num_bands=5,
        axis_profile=(AxisKeyframe(0.0, (1.0, 0.0, 0.0)), AxisKeyframe(4.0, (0.0, 2.0, 0.0))),
    )
    axes = axis_profile(spec)
    assert_allclose(np.linalg.norm(axes, axis=1), 1.0)
    assert_allclose(axes[0], [1.0, 0.0, 0.0])
    assert_allclose(axes[2], [np.sqrt(0.5), np.sqrt(0.5), 0.0])
    assert_allclose(axes[4], [0.0, 1.0, 0.0])


def test_antipodal_keyframes_rejected():
    spec = SourceSpec(
        num_bands=5,
        axis_profile=(AxisKeyframe(0.0, (1.0, 0.0, 0.0)), AxisKeyframe(4.0, (-1.0, 0.0, 0.0))),
    )
    with pytest.raises(InvalidSpecError) as info:
        gen_sources([spec])
    assert info.value.field_path == "sources[0].axis_profile"


def test_jitter_is_seeded():
    spec = SourceSpec(num_bands=16, intensity_profile=(Bump(8.0, 3.0, 1.0),), jitter=0.2)
    assert gen_sources([spec], seed=4) == gen_sources([spec], seed=4)
    assert gen_sources([spec], seed=4) != gen_sources([spec], seed=5)


@pytest.mark.parametrize(
    "spec, field",
    [
        (SourceSpec(num_bands=8, dop_profile=(1.5,)), "sources[0].dop_profile[0]"),
        (SourceSpec(num_bands=8, dop_profile=(0.5, 0.5)), "sources[0].dop_profile"),
        (SourceSpec(num_bands=8, intensity_profile=(Bump(1.0, 0.0, 1.0),)), "sources[0].intensity_profile[0].width"),
        (SourceSpec(num_bands=8, axis_profile=(AxisKeyframe(0.0, (0.0, 0.0, 0.0)),)), "sources[0].axis_profile[0].axis"),
        (SourceSpec(num_bands=0), "sources[0].num_bands"),
    ],
)
def test_invalid_source_specs_name_field(spec, field):
    with pytest.raises(InvalidSpecError) as info:
        gen_sources([spec])
    assert info.value.field_path == field


def test_mismatched_band_counts_rejected():
    with pytest.raises(InvalidSpecError):
        gen_sources([SourceSpec(num_bands=8), SourceSpec(num_bands=9)])


# --- 激活 ---

def test_activations_have_pure_pixels():
    spec = desk_scale_activations((16, 16), 3)
    H, witnesses = gen_activations_with_witnesses(spec, seed=2)
    assert H.shape == (3, 256)
    assert np.all(H >= 0.0)
    assert len(set(witnesses)) == 3
    for p, n in enumerate(witnesses):
        assert H[p, n] > 0.0
        assert np.all(np.delete(H[:, n], p) == 0.0)


def test_truncated_blobs_give_exact_zeros():
    spec = ActivationSpec(
        grid=(10, 10),
        num_sources=1,
        blobs=((Blob(0.0, 0.0, 1.0),),),
        ensure_pure_pixels=False,
    )
    field = gen_activations(spec).reshape(10, 10)
    assert field[0, 0] == pytest.approx(1.0)
    assert field[3, 0] > 0.0
    assert field[4, 0] == 0.0
    assert field[9, 9] == 0.0


def test_activations_are_seeded():
    spec = ActivationSpec(grid=(8, 8), num_sources=2)
    assert np.array_equal(gen_activations(spec, 1), gen_activations(spec, 1))
    assert not np.array_equal(gen_activations(spec, 1), gen_activations(spec, 2))


def test_invalid_activation_spec():
    with pytest.raises(InvalidSpecError) as info:
        gen_activations(ActivationSpec(grid=(2, 1), num_sources=3))
    assert info.value.field_path == "activations.grid"
    with pytest.raises(InvalidSpecError):
        gen_activations(ActivationSpec(num_sources=2, blobs=((Blob(1.0, 1.0, 1.0),),)))


# --- 组装 ---

def test_assemble_exact_and_noisy(rng, make_cone):
    W = QuaternionMatrix(make_cone(rng, (6, 2)))
    H = rng.uniform(size=(2, 9))
    assert assemble(W, H) == W @ H
    noisy = assemble(W, H, noise_sigma=0.5, seed=3)
    assert np.all(in_cone_array(noisy.data))
    assert noisy != W @ H
    assert assemble(W, H, noise_sigma=0.5, seed=3) == noisy
    with pytest.raises(DimensionMismatchError):
        assemble(W, H[:1])
    with pytest.raises(InvalidSpecError):
        assemble(W, H, noise_sigma=-1.0)


def test_synthetic_source_payload():
    sources, activations = sufficient_instance()
    payload = SyntheticSource(sources, activations, seed=9).fetch()
    assert payload.X == payload.truth.W @ payload.truth.H
    assert payload.origin_info["seed"] == 9
    assert len(payload.origin_info["pure_pixels"]) == 2
    again = SyntheticSource(sources, activations, seed=9).fetch()
    assert again.X == payload.X


def test_synthetic_source_checks_source_count():
    sources, _ = sufficient_instance()
    with pytest.raises(InvalidSpecError) as info:
        SyntheticSource(sources, ActivationSpec(num_sources=3)).fetch()
    assert info.value.field_path == "activations.num_sources"


def test_spec_dict_round_trip():
    sources, activations = sufficient_instance()
    for spec in sources:
        assert SourceSpec.from_dict(spec.to_dict()) == spec
    assert ActivationSpec.from_dict(activations.to_dict()) == activations
