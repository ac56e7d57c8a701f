import json
import math

import pytest
import torch

from gemvpc.estimator import build_video_inputs, make_items
from gemvpc.model import GEMVPCModel, ModelConfig
from gemvpc.text import Vocabulary, build_vocabulary
from gemvpc.training import (EarlyStopState, Example, TrainConfig, TrainingDiverged, lr_at_step,
                             load_checkpoint, make_optimizer, save_checkpoint, smoothed_kl_loss, train,
                             train_epoch, _loss_for_video)
from conftest import float64
from tiny import tiny_model, tiny_video

VOCAB = Vocabulary(["wave"])  # 6 special tokens + 1 word


def kl_oracle(target, q):
    return sum(t * math.log(t / qi) for t, qi in zip(target, q) if t > 0)


def test_kl_hand_value():
    loss = smoothed_kl_loss(torch.zeros(1, 3, dtype=torch.float64), torch.tensor([0]), 0.3, pad_id=99)
    want = kl_oracle([0.7, 0.15, 0.15], [1 / 3] * 3)
    assert float(loss) == pytest.approx(want, abs=1e-12)
    assert round(want, 6) == 0.279804


def test_kl_identities():
    target = torch.tensor([[0.7, 0.15, 0.15]], dtype=torch.float64)
    loss = smoothed_kl_loss(target.log(), torch.tensor([0]), 0.3, pad_id=99)
    assert abs(float(loss)) < 1e-9
    logits = torch.randn(4, 5, dtype=torch.float64)
    tgt = torch.tensor([1, 0, 3, 2])
    nll = torch.nn.functional.cross_entropy(logits, tgt)
    assert float(smoothed_kl_loss(logits, tgt, 0.0, pad_id=99)) == pytest.approx(float(nll), abs=1e-12)


def test_kl_ignores_pad():
    logits = torch.randn(5, 6, dtype=torch.float64)
    tgt = torch.tensor([1, 2, 3, 0, 0])
    a = smoothed_kl_loss(logits[:3], tgt[:3], 0.3, pad_id=0)
    b = smoothed_kl_loss(logits, tgt, 0.3, pad_id=0)
    assert float(a) == pytest.approx(float(b), abs=1e-12)
    with pytest.raises(ValueError, match="PAD"):
        smoothed_kl_loss(logits[:2], torch.tensor([0, 0]), 0.3, pad_id=0)


def test_lr_schedule():
    cfg = TrainConfig()
    assert lr_at_step(0, 10, cfg) == 0.0
    assert lr_at_step(25, 10, cfg) == pytest.approx(5e-5)
    assert lr_at_step(50, 10, cfg) == pytest.approx(1e-4)
    assert lr_at_step(5000, 10, cfg) == pytest.approx(1e-4)


def test_early_stop_contract():
    s = EarlyStopState(patience=2)
    assert [s.update(c, e) for e, c in enumerate([1.0, 2.0, 2.0, 2.0], 1)] == [False, False, False, True]
    assert s.best_epoch == 2


def examples(n=2):
    return [Example(tiny_video(seed=i), [[6, 6], [6]]) for i in range(n)]


def test_constant_validation_with_patience_one_stops_at_epoch_two():
    model = tiny_model(dtype=torch.float32)
    res = train(model, examples(), VOCAB, TrainConfig(patience=1, max_epochs=10), validate=lambda m: 1.0)
    assert len(res.history) == 2 and res.best_epoch == 1


def test_same_seed_same_loss_trace():
    with float64():
        losses = []
        for _ in range(2):
            model = tiny_model()
            res = train(model, examples(), VOCAB, TrainConfig(max_epochs=2))
            losses.append([h["train_loss"] for h in res.history])
    assert losses[0] == losses[1]


def test_log_file_and_checkpoint_round_trip(tmp_path):
    with float64():
        model = tiny_model()
        log, ckpt = tmp_path / "log.jsonl", tmp_path / "m.pt"
        train(model, examples(), VOCAB, TrainConfig(max_epochs=2), log_path=log, checkpoint_path=ckpt)
        rows = [json.loads(line) for line in log.read_text().splitlines()]
        assert [r["epoch"] for r in rows] == [1, 2] and set(rows[0]) >= {"train_loss", "val_cider", "lr"}
        loaded, vocab, payload = load_checkpoint(ckpt)
        assert vocab == VOCAB and payload["extra"]["epoch"] == 2
        video = tiny_video()
        tok = torch.tensor([1, 6])
        with torch.no_grad():
            model.eval()
            assert torch.equal(model.forward_event(video, 0, tok).logits, loaded.forward_event(video, 0, tok).logits)


def test_checkpoint_errors(tmp_path):
    model = tiny_model(dtype=torch.float32)
    path = tmp_path / "m.pt"
    save_checkpoint(path, model, VOCAB)
    payload = torch.load(path, weights_only=False)
    payload["version"] = 99
    torch.save(payload, tmp_path / "v.pt")
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(tmp_path / "v.pt")
    payload["version"] = 1
    payload["vocab_digest"] = "0" * 64
    torch.save(payload, tmp_path / "h.pt")
    with pytest.raises(ValueError, match="hash"):
        load_checkpoint(tmp_path / "h.pt")
    torch.save({"x": 1}, tmp_path / "n.pt")
    with pytest.raises(ValueError, match="not a checkpoint"):
        load_checkpoint(tmp_path / "n.pt")
    assert not list(tmp_path.glob("*.tmp"))


def test_optimizer_step_touches_exactly_the_parameters_with_gradient():
    model = tiny_model("mart", dtype=torch.float32)
    before = {k: v.clone() for k, v in model.named_parameters()}
    opt = make_optimizer(model, TrainConfig(weight_decay=0.0))
    for g in opt.param_groups:
        g["lr"] = 1e-3
    loss, n = _loss_for_video(model, examples(1)[0], VOCAB, 0.3, 0)
    (loss / n).backward()
    opt.step()
    for name, p in model.named_parameters():
        changed = not torch.equal(p, before[name])
        has_grad = p.grad is not None and bool(p.grad.abs().sum() > 0)
        assert changed == has_grad, name
    # the MART initial-memory path is live, the TinT module does not exist
    assert model.visual_stream.layers[0].memory.init_fc.weight.grad is not None


def test_non_finite_loss_names_batch_and_event():
    model = tiny_model(dtype=torch.float32)
    with torch.no_grad():
        model.head[-1].bias[0] = float("nan")
    with pytest.raises(TrainingDiverged, match="batch 0.*event 0"):
        train(model, examples(1), VOCAB, TrainConfig(max_epochs=1))


def test_toy_loss_decreases_over_first_three_epochs(toy):
    records, features, bundles = toy
    items = make_items(records, features, bundles)
    vocab = build_vocabulary(records)
    torch.manual_seed(0)
    cfg = ModelConfig(vocab_size=len(vocab), visual_dim=features[0].dim, hidden=128, intermediate=128,
                      heads=4, use_graph=False, dropout=0.0)
    videos = build_video_inputs(items)
    exs = [Example(v, [vocab.encode(c) for c in r.captions]) for v, r in zip(videos, records)]
    model = GEMVPCModel(cfg)
    res = train(model, exs, vocab, TrainConfig(max_epochs=3))
    losses = [h["train_loss"] for h in res.history]
    assert losses[0] > losses[1] > losses[2]
