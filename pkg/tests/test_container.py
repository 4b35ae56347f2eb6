import numpy as np
import pytest

from domgap.container import load_tensors, save_tensors
from domgap.errors import FormatError


def test_round_trip_preserves_order_values_and_meta(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {"z": rng.normal(size=(3, 4)).astype(np.float32), "a": np.arange(5, dtype=np.float32),
               "scalar": np.array(2.5, dtype=np.float32)}
    save_tensors(tmp_path / "m.dimdl", tensors, {"k": 3})
    back, meta = load_tensors(tmp_path / "m.dimdl")
    assert list(back) == ["z", "a", "scalar"]
    for k in tensors:
        assert back[k].tobytes() == tensors[k].tobytes()
    assert meta == {"k": 3}


def test_layout(tmp_path):
    save_tensors(tmp_path / "m.dimdl", {"w": np.ones(2, np.float32)})
    raw = (tmp_path / "m.dimdl").read_bytes()
    assert raw[:5] == b"DIMDL"
    assert int.from_bytes(raw[5:7], "little") == 1
    hlen = int.from_bytes(raw[7:11], "little")
    assert raw[11 + hlen:] == np.ones(2, "<f4").tobytes()


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXXXX" + b[5:],
    lambda b: b[:-1],
    lambda b: b + b"\0",
    lambda b: b[:5] + (9).to_bytes(2, "little") + b[7:],
])
def test_corruption_rejected(tmp_path, mutate):
    p = tmp_path / "m.dimdl"
    save_tensors(p, {"w": np.ones((2, 2), np.float32)})
    p.write_bytes(mutate(p.read_bytes()))
    with pytest.raises(FormatError):
        load_tensors(p)
