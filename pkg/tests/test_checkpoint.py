import numpy as np
import pytest

from mlattack.checkpoint import (MAGIC, CheckpointError, from_bytes, load_model, model_checksum,
                                 save_model, to_bytes)
from mlattack.model import LinearModel, init_mlp


def test_linear_round_trip_bit_exact(tmp_path):
    W = np.random.default_rng(0).standard_normal((7, 3))
    p = tmp_path / "m.ckpt"
    digest = save_model(LinearModel(W), p)
    back = load_model(p)
    assert back.W.tobytes() == W.tobytes()
    assert digest == model_checksum(back)


def test_mlp_round_trip(tmp_path):
    net = init_mlp([4, 5, 3, 2], ["tanh", "sigmoid"], seed=3)
    p = tmp_path / "n.ckpt"
    save_model(net, p)
    back = load_model(p)
    assert [l.activation for l in back.layers] == ["tanh", "sigmoid", "identity"]
    assert all(a.A.tobytes() == b.A.tobytes() for a, b in zip(net.layers, back.layers))


def test_layout_header():
    buf = to_bytes(LinearModel(np.eye(2)))
    assert buf[:8] == MAGIC
    assert int.from_bytes(buf[8:12], "little") == 1
    assert buf[-32:] == np.eye(2).astype("<f8").tobytes()


@pytest.mark.parametrize("mangle", [lambda b: b"XXXXXXXX" + b[8:], lambda b: b[:-8],
                                    lambda b: b + b"\0"])
def test_corrupt_checkpoints(mangle):
    with pytest.raises(CheckpointError):
        from_bytes(mangle(to_bytes(LinearModel(np.eye(2)))))
