import numpy as np
import pytest
import torch

from fallacylab.corpus import Argument, DatasetSplit
from fallacylab.encoders import EncoderHandle, TinyEncoderConfig
from fallacylab.errors import ShapeMismatch
from fallacylab.ibr import IbrConfig, IbrModel, compose_input, train_ibr
from fallacylab.models import EncoderClassifier
from fallacylab.text import tokenize


def numpy_multihead_attention(query, key, value, mha: torch.nn.MultiheadAttention):
    """Independent oracle for nn.MultiheadAttention (batch_first, no masks)."""
    d = mha.embed_dim
    h = mha.num_heads
    dh = d // h
    w_in = mha.in_proj_weight.detach().numpy()
    b_in = mha.in_proj_bias.detach().numpy()
    w_out = mha.out_proj.weight.detach().numpy()
    b_out = mha.out_proj.bias.detach().numpy()
    q = query @ w_in[:d].T + b_in[:d]
    k = key @ w_in[d : 2 * d].T + b_in[d : 2 * d]
    v = value @ w_in[2 * d :].T + b_in[2 * d :]

    def split_heads(x):  # [B, T, D] -> [B, H, T, Dh]
        b, t, _ = x.shape
        return x.reshape(b, t, h, dh).transpose(0, 2, 1, 3)

    qh, kh, vh = split_heads(q), split_heads(k), split_heads(v)
    scores = qh @ kh.transpose(0, 1, 3, 2) / np.sqrt(dh)
    scores = scores - scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights = weights / weights.sum(axis=-1, keepdims=True)
    out = weights @ vh  # [B, H, Tq, Dh]
    b, _, tq, _ = out.shape
    merged = out.transpose(0, 2, 1, 3).reshape(b, tq, d)
    return merged @ w_out.T + b_out


@pytest.fixture()
def small_model():
    cfg = IbrConfig(
        k_cases=2,
        num_attention_heads=2,
        encoder=TinyEncoderConfig(dim=8, heads=2, layers=1, ffn_dim=16, max_len=16, seed=3),
        classifier_hidden_dim=12,
        dropout=0.0,
    )
    return IbrModel(cfg, ["fallacious", "not_fallacious"])


# ---------------------------------------------------------------------------
# compose_input


def test_compose_k0_identity():
    assert compose_input("Original case text.", []) == "Original case text."


def test_compose_joins_with_separator():
    assert compose_input("a", ["b", "c"]) == "a <SEP> b c"


def test_compose_truncates_to_max():
    case = " ".join(f"w{i}" for i in range(10))
    neighbors = [" ".join(f"n{i}" for i in range(20))]
    out = compose_input(case, neighbors, max_tokens=16)
    assert len(tokenize(out)) == 16


def test_compose_case_never_cut_for_neighbors():
    case = " ".join(f"w{i}" for i in range(12))
    out = compose_input(case, ["neighbor text"], max_tokens=8)
    assert tokenize(out)[:8] == tokenize(case)[:8]


def test_compose_k0_overlength():
    case = " ".join(f"w{i}" for i in range(30))
    assert len(tokenize(compose_input(case, [], max_tokens=16))) == 16


# ---------------------------------------------------------------------------
# adapter


def test_attention_matches_oracle(small_model):
    torch.manual_seed(0)
    e_case = torch.randn(2, 4, 8)
    e_comb = torch.randn(2, 7, 8)
    small_model.eval()
    with torch.no_grad():
        got = small_model.adapt(e_case, e_comb).numpy()
    want = numpy_multihead_attention(e_case.numpy(), e_comb.numpy(), e_comb.numpy(), small_model.attention)
    assert np.allclose(got, want, atol=1e-5)
    assert got.shape == e_case.shape


def test_attention_disabled_is_bitwise_passthrough(small_model):
    small_model.cfg.attention_enabled = False
    e_case = torch.randn(2, 4, 8)
    e_comb = torch.randn(2, 9, 8)
    out = small_model.adapt(e_case, e_comb)
    assert out is e_case
    small_model.cfg.attention_enabled = True


def test_singleton_key_gets_full_weight(small_model):
    """One combined token: softmax over a singleton puts weight 1 on it, so
    every query position maps to the same projected value row."""
    small_model.eval()
    e_case = torch.randn(1, 5, 8)
    e_comb = torch.randn(1, 1, 8)
    with torch.no_grad():
        out = small_model.adapt(e_case, e_comb).numpy()
    assert np.allclose(out[0, 0], out[0, 3], atol=1e-6)
    want = numpy_multihead_attention(e_case.numpy(), e_comb.numpy(), e_comb.numpy(), small_model.attention)
    assert np.allclose(out, want, atol=1e-5)


def test_shape_mismatch(small_model):
    with pytest.raises(ShapeMismatch):
        small_model.adapt(torch.randn(1, 3, 8), torch.randn(1, 3, 6))


# ---------------------------------------------------------------------------
# classifier


def test_probabilities_on_simplex(small_model):
    small_model.eval()
    with torch.no_grad():
        probs = small_model.classify_states(torch.randn(5, 4, 8))
    assert probs.shape == (5, 2)
    assert torch.allclose(probs.sum(dim=1), torch.ones(5), atol=1e-6)
    assert (probs >= 0).all()


def test_equal_logits_uniform(small_model):
    with torch.no_grad():
        small_model.head.net[-1].weight.zero_()
        small_model.head.net[-1].bias.fill_(0.3)
        probs = small_model.classify_states(torch.randn(3, 4, 8))
    assert torch.allclose(probs, torch.full((3, 2), 0.5), atol=1e-6)


def test_head_gradient_matches_finite_differences(small_model):
    """d(loss)/d(final-layer weight) via autograd vs central differences,
    in float64 so the 1e-4 relative tolerance is meaningful."""
    small_model.head.double()
    small_model.eval()
    adapted = torch.randn(4, 3, 8, dtype=torch.float64)
    target = torch.tensor([0, 1, 0, 1])
    weight = small_model.head.net[-1].weight

    def loss_value():
        logits = small_model.head(adapted[:, 0])
        return torch.nn.functional.cross_entropy(logits, target)

    loss = loss_value()
    loss.backward()
    grad = weight.grad.clone()
    eps = 1e-4
    for idx in [(0, 0), (1, 5), (0, 11)]:
        with torch.no_grad():
            original = weight[idx].item()
            weight[idx] = original + eps
            up = loss_value().item()
            weight[idx] = original - eps
            down = loss_value().item()
            weight[idx] = original
        fd = (up - down) / (2 * eps)
        assert grad[idx].item() == pytest.approx(fd, rel=1e-4, abs=1e-6)


# ---------------------------------------------------------------------------
# baseline equivalence


def test_k0_no_attention_equals_baseline():
    enc = TinyEncoderConfig(dim=16, heads=2, layers=2, ffn_dim=32, max_len=24, seed=9)
    cfg = IbrConfig(
        k_cases=0, num_attention_heads=2, attention_enabled=False,
        encoder=enc, classifier_hidden_dim=20, dropout=0.0,
    )
    classes = ["fallacious", "not_fallacious"]
    ibr = IbrModel(cfg, classes)
    baseline = EncoderClassifier(enc, classes, hidden=20, dropout=0.0)
    baseline.encoder.load_state_dict(ibr.encoder.state_dict())
    baseline.head.load_state_dict(ibr.head.state_dict())
    texts = ["the river was silver and bright", "a stone on the road"]
    ibr.eval(), baseline.eval()
    with torch.no_grad():
        # k = 0 composes S = C, so both sides see identical inputs
        got = ibr(texts, texts)
        want = baseline(texts)
    assert torch.equal(got, want)


# ---------------------------------------------------------------------------
# training surface


def test_train_ibr_smoke_and_explanations(binary_splits, tiny_encoder_cfg):
    cfg = IbrConfig(
        k_cases=2, num_attention_heads=2, encoder=tiny_encoder_cfg,
        retriever=EncoderHandle("hash", 256, "mean"),
    )
    pipeline, report = train_ibr(
        binary_splits, cfg, epochs=3, batch_size=16, learning_rate=3e-3, seed=1
    )
    assert len(report.epoch_seconds) == 3
    assert len(report.explanations) == len(binary_splits["test"])
    record = pipeline.explain(binary_splits["test"].arguments[0].text)
    assert set(record) == {"prediction", "neighbors"}
    assert all({"id", "text", "similarity"} <= set(n) for n in record["neighbors"])
    assert len(record["neighbors"]) <= cfg.k_cases


def test_train_excludes_self_from_neighbors(binary_splits, tiny_encoder_cfg):
    """A training query's own id is excluded from its retrieved cases."""
    from fallacylab.encoders import resolve_encoder
    from fallacylab.retrieval import Retriever, build_case_base

    handle = EncoderHandle("hash", 256, "mean")
    encoder = resolve_encoder(handle)
    base = build_case_base(binary_splits["train"], encoder)
    retriever = Retriever(encoder, base)
    a = binary_splits["train"].arguments[0]
    result = retriever.retrieve(a.text, k=3, threshold=0.0, exclude_ids=[a.id])
    assert a.id not in result.ids()
