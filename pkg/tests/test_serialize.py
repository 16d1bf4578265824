"""Binary container round-trips and corruption handling."""
import struct
import zlib

import numpy as np
import pytest

from srkit import DecodeError, UnsupportedFormatError
from srkit.formats import (
    basis_digest,
    decode_basis,
    decode_kernel,
    decode_model,
    encode_basis,
    encode_kernel,
    encode_model,
    load_kernel,
    probe_model,
    save_kernel,
)
from srkit.kernels import isotropic_gaussian
from srkit.net import ModelConfig, fold_bn, forward_tensor, init_model, strip_noise_channel
from srkit.pca import fit_pca
from srkit.rng import gaussian_field


@pytest.fixture(scope="module")
def basis():
    sample = [isotropic_gaussian(w, 5) for w in np.geomspace(0.3, 2.5, 12)]
    return fit_pca(sample, 4)


def _small_model(**kw):
    cfg = ModelConfig(scale=2, depth=3, width=6, color_channels=3,
                      coeff_dim=15, **kw)
    return init_model(cfg, seed=2)


def test_kernel_round_trip(tmp_path):
    k = isotropic_gaussian(1.7, 9)
    path = str(tmp_path / "k.srkn")
    save_kernel(k, path)
    back = load_kernel(path)
    assert back.size == 9
    assert np.array_equal(back.weights, k.weights.astype(np.float32).astype(np.float64))


def test_kernel_header_errors():
    blob = encode_kernel(isotropic_gaussian(0.8, 5))
    with pytest.raises(DecodeError) as err:
        decode_kernel(b"XXXX" + blob[4:])
    assert err.value.offset == 0
    with pytest.raises(UnsupportedFormatError):
        decode_kernel(blob[:4] + b"\x02" + blob[5:])
    with pytest.raises(DecodeError) as err:
        decode_kernel(blob[:20])
    assert err.value.offset == 7
    with pytest.raises(DecodeError):
        decode_kernel(blob + b"\x00")
    even = blob[:5] + struct.pack("<H", 4) + blob[7:]
    with pytest.raises(DecodeError):
        decode_kernel(even)


def test_basis_round_trip(basis):
    back = decode_basis(encode_basis(basis))
    assert back.dim_in == 25 and back.dim_out == 4
    assert np.allclose(back.projection, basis.projection, atol=1e-6)
    assert abs(back.energy_retained - basis.energy_retained) < 1e-6


def test_basis_rejects_broken_rows(basis):
    blob = bytearray(encode_basis(basis))
    blob[40] ^= 0xFF  # corrupt one projection float
    with pytest.raises(DecodeError):
        decode_basis(bytes(blob))


def test_basis_digest_is_content_hash(basis):
    d1 = basis_digest(basis)
    assert len(d1) == 32
    assert d1 == basis_digest(basis)
    sample = [isotropic_gaussian(w, 5) for w in np.geomspace(0.4, 2.0, 12)]
    other = fit_pca(sample, 4)
    assert basis_digest(other) != d1


def test_model_round_trip_unfolded(basis):
    model = _small_model()
    blob = encode_model(model, basis)
    back, digest = decode_model(blob)
    assert digest == basis_digest(basis)
    assert (back.scale, back.depth, back.width) == (2, 3, 6)
    assert back.in_channels == 19 and back.coeff_dim == 15
    assert back.noise_conditioned and not back.folded
    for a, b in zip(model.layers, back.layers):
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)
        if a.bn is not None:
            assert np.array_equal(a.bn.gamma, b.bn.gamma)
            assert np.array_equal(a.bn.running_var, b.bn.running_var)
    x = gaussian_field(31, (1, 19, 6, 6)).astype(np.float32)
    ya, _ = forward_tensor(model, x)
    yb, _ = forward_tensor(back, x)
    assert np.array_equal(ya, yb)


def test_model_round_trip_folded_and_stripped(basis):
    folded = fold_bn(_small_model())
    back, _ = decode_model(encode_model(folded, basis))
    assert back.folded
    assert all(b.bn is None for b in back.layers)
    stripped = strip_noise_channel(_small_model())
    back2, _ = decode_model(encode_model(stripped, basis))
    assert not back2.noise_conditioned
    assert back2.in_channels == 18
    assert back2.color_channels == 3


def test_model_crc_guard(basis):
    blob = bytearray(encode_model(_small_model(), basis))
    blob[60] ^= 0x01
    with pytest.raises(DecodeError) as err:
        decode_model(bytes(blob))
    assert "checksum" in str(err.value)
    info = probe_model(bytes(blob))
    assert not info.crc_ok
    assert info.scale == 2  # header still readable


def test_model_probe_summary(basis):
    info = probe_model(encode_model(_small_model(), basis))
    assert info.crc_ok
    assert info.noise_conditioned and not info.folded
    assert info.coeff_dim == 15
    assert info.basis_digest == basis_digest(basis).hex()


def test_model_truncation_reports_offset(basis):
    blob = encode_model(_small_model(), basis)
    cut = blob[:100]
    with pytest.raises(DecodeError) as err:
        decode_model(cut, verify_crc=False)
    assert err.value.offset is not None
    with pytest.raises(DecodeError):
        decode_model(b"")


def test_model_trailing_bytes_detected(basis):
    blob = encode_model(_small_model(), basis)
    payload = blob[:-4] + b"\x00\x00\x00"
    doctored = payload + struct.pack("<I", zlib.crc32(payload))
    with pytest.raises(DecodeError) as err:
        decode_model(doctored)
    assert "trailing" in str(err.value)
