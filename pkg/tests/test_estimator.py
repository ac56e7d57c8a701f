import pytest
import torch
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from gemvpc.data import ValidationError
from gemvpc.estimator import ParagraphCaptioner, make_items
from gemvpc.toy import generate_toy_dataset

SMALL = dict(hidden=32, heads=4, layers=1, max_epochs=2, min_count=1, top_n_vg=16, n_clusters=4,
             node_feat_dim=16, dtype="float64")


@pytest.fixture(scope="module")
def items():
    records, features, bundles = generate_toy_dataset(seed=2, n_videos=6)
    return make_items(records, features, bundles)


@pytest.fixture(scope="module")
def fitted(items):
    return ParagraphCaptioner(**SMALL).fit(items[:4], X_val=items[4:])


def test_params_and_clone():
    est = ParagraphCaptioner(**SMALL)
    assert est.get_params()["hidden"] == 32
    assert clone(est).get_params() == est.get_params()
    with pytest.raises(NotFittedError):
        est.predict([])


def test_fit_predict_score(fitted, items):
    assert len(fitted.history_) == 2 and fitted.history_[0]["val_cider"] is not None
    out = fitted.predict(items[4:], mode="greedy")
    assert [p.video_id for p in out] == [it.record.video_id for it in items[4:]]
    assert all(len(p.captions) == it.record.n_events for p, it in zip(out, items[4:]))
    score = fitted.score(items[4:], mode="greedy")
    assert score >= 0.0


def test_save_load_reproduces_validation_cider(fitted, items, tmp_path):
    fitted.save(tmp_path / "m.pt")
    back = ParagraphCaptioner.load(tmp_path / "m.pt")
    assert back.get_params(deep=False)["hidden"] == 32
    assert back.score(items[4:], mode="greedy") == fitted.score(items[4:], mode="greedy")
    a = fitted.predict(items[4:], mode="nucleus")
    b = back.predict(items[4:], mode="nucleus")
    assert [p.token_ids for p in a] == [p.token_ids for p in b]


def test_visual_only_needs_no_bundles(items):
    plain = [type(it)(it.record, it.features) for it in items[:3]]
    est = ParagraphCaptioner(**{**SMALL, "use_graph": False, "max_epochs": 1}).fit(plain)
    assert not hasattr(est, "vg_builder_")
    with pytest.raises(ValidationError, match="bundle"):
        ParagraphCaptioner(**SMALL).fit(plain)


def test_input_validation(items):
    with pytest.raises(ValueError, match="y=None"):
        ParagraphCaptioner(**SMALL).fit(items, y=[1])
    with pytest.raises(ValidationError):
        ParagraphCaptioner(**SMALL).fit([])
    with pytest.raises(ValidationError, match="features belong"):
        type(items[0])(items[0].record, items[1].features)
    with pytest.raises(ValueError, match="dtype"):
        ParagraphCaptioner(dtype="float16").torch_dtype
