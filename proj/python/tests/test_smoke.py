import json

import numpy as np
import pytest

import vrdone


def test_pure_functions():
    assert vrdone.pyramid_lengths(512, 3) == [512, 256, 128, 64]
    assert vrdone.pyramid_lengths(96, 3) == [96, 48, 24, 12]
    assert vrdone.t_iou(0, 10, 5, 15) == pytest.approx(0.375)
    assert vrdone.average_precision([True, False, True], 3) == pytest.approx((1 + 2 / 3) / 3)
    cost = np.array([[4.0, 1.0], [2.0, 0.5], [3.0, 3.0]])
    assert vrdone.hungarian(cost) == [1, 0]
    assert len(vrdone.predicates()) == 6


def test_synth_train_infer_eval(tmp_path):
    stats = vrdone.synth({"num_videos": 3, "frames": 32, "seed": 2}, str(tmp_path / "data"))
    assert stats["videos"] == 3
    assert stats["relations"] > 0

    config = {
        "model": {"feature_dim": 16, "dim": 16, "heads": 2, "num_predicates": 6,
                  "decoder_layers": 1, "num_queries": 8},
        "data": {"train_dir": "data", "max_len": 32, "batch_size": 4, "epochs": 1},
        "output": {"dir": "run", "checkpoint_every": 0},
    }
    (tmp_path / "run.json").write_text(json.dumps(config))
    ckpt = vrdone.train(str(tmp_path / "run.json"))
    assert (tmp_path / "run" / "final.ckpt").exists()

    pred = tmp_path / "pred.json"
    vrdone.infer(ckpt, str(tmp_path / "data"), str(pred))
    assert json.loads(pred.read_text())["schema_version"] == 1

    report = vrdone.evaluate(str(pred), str(tmp_path / "data"))
    assert 0.0 <= report["relation_detection"]["mAP"] <= 1.0


def test_errors(tmp_path):
    with pytest.raises(vrdone.ConfigError):
        vrdone.synth({"num_videos": 1, "unknown": 3}, str(tmp_path))
    with pytest.raises(ValueError):
        vrdone.evaluate(str(tmp_path / "missing.json"), str(tmp_path))
