import json
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mchankel import io
from mchankel.sampling import sample_mask
from mchankel.signal_gen import gen_spectral


@given(hnp.arrays(np.complex128, hnp.array_shapes(min_dims=2, max_dims=2, max_side=8),
                  elements=st.complex_numbers(allow_nan=False, allow_infinity=False)))
def test_matrix_round_trip_is_exact(tmp_path_factory, X):
    path = tmp_path_factory.mktemp("io") / "x.mchs"
    io.write_matrix(path, X)
    Y = io.read_matrix(path)
    assert Y.dtype == np.complex128 and Y.tobytes() == X.tobytes()


def test_header_layout(tmp_path):
    path = tmp_path / "x.mchs"
    io.write_matrix(path, np.array([[1 + 2j, 3.0]]))
    raw = path.read_bytes()
    assert raw[:4] == b"MCHS"
    assert struct.unpack("<IIIB", raw[4:17]) == (1, 1, 2, 0)
    assert struct.unpack("<4d", raw[17:]) == (1.0, 2.0, 3.0, 0.0)


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda b: b"XXXX" + b[4:], "magic"),
        (lambda b: b[:4] + struct.pack("<I", 9) + b[8:], "version"),
        (lambda b: b[:16] + b"\x01" + b[17:], "dtype"),
        (lambda b: b[:-8], "data bytes"),
        (lambda b: b[:10], "header"),
    ],
)
def test_corrupt_files_rejected(tmp_path, mutate, message):
    path = tmp_path / "x.mchs"
    io.write_matrix(path, np.ones((2, 3)))
    path.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(ValueError, match=message):
        io.read_matrix(path)


def test_write_rejects_non_matrix(tmp_path):
    with pytest.raises(ValueError):
        io.write_matrix(tmp_path / "x.mchs", np.ones(3))


def test_signal_with_params_round_trip(tmp_path):
    sig = gen_spectral(3, 20, 2, seed=5, damped=True)
    path = tmp_path / "s.mchs"
    io.save_signal(path, sig, extra={"note": "x"})
    back = io.load_signal(path)
    assert back.data.tobytes() == sig.data.tobytes()
    assert np.array_equal(back.params.f, sig.params.f)
    assert np.array_equal(back.params.tau, sig.params.tau)
    assert np.array_equal(back.params.D, sig.params.D)
    assert back.seed == 5 and back.meta["note"] == "x"
    assert json.loads(io.sidecar_path(path).read_text())["params"]["tau"][0] > 0


def test_signal_without_metadata_has_no_sidecar(tmp_path):
    from mchankel.signal_gen import MultiChannelSignal

    path = tmp_path / "s.mchs"
    io.save_signal(path, MultiChannelSignal(np.ones((2, 4))))
    assert not io.sidecar_path(path).exists()
    assert io.load_signal(path).params is None


def test_mask_json_round_trip():
    m = sample_mask(4, 30, "M3", 0.2, seed=3)
    d = json.loads(json.dumps(io.mask_to_json(m)))
    assert d["indices"] == sorted(d["indices"])
    back = io.mask_from_json(d)
    assert np.array_equal(back.observed, m.observed) and back.mode == "M3" and back.seed == 3


def test_read_config(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[run]\nseed = 4\n\n[sweep]\nlosses = 0.3, 0.5\n")
    assert io.read_config(path) == {"run": {"seed": "4"}, "sweep": {"losses": "0.3, 0.5"}}


def test_to_jsonable():
    out = io.to_jsonable({"a": np.float64(1.5), "b": np.arange(2), "c": (1j,), 3: np.bool_(True)})
    assert json.dumps(out) == '{"a": 1.5, "b": [0, 1], "c": [[0.0, 1.0]], "3": true}'
