"""Backbone architecture invariants and configuration checks."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from brainalign.backbone import (
    STAGE_NAMES,
    BackboneSpec,
    FeedforwardStage,
    RecurrentStage,
    build_backbone,
    full_spec,
    tiny_spec,
)


def test_default_recurrence_counts():
    assert full_spec().recurrence == (1, 2, 4, 2)
    assert tiny_spec().recurrence == (1, 2, 4, 2)


def test_v1_must_be_feedforward():
    with pytest.raises(ValueError, match="feedforward"):
        BackboneSpec(
            name="bad", channels=(8, 8, 8, 8), input_size=32, n_classes=10,
            recurrence=(2, 2, 4, 2),
        )


def test_spec_rejects_bad_shapes():
    with pytest.raises(ValueError, match="multiple"):
        BackboneSpec(name="bad", channels=(8, 8, 8, 8), input_size=48, n_classes=10)
    with pytest.raises(ValueError, match="recurrence"):
        BackboneSpec(
            name="bad", channels=(8, 8, 8, 8), input_size=32, n_classes=10,
            recurrence=(1, 0, 4, 2),
        )
    with pytest.raises(ValueError, match="n_classes"):
        BackboneSpec(name="bad", channels=(8, 8, 8, 8), input_size=32, n_classes=1)


def test_full_spec_stage_resolutions():
    assert full_spec().stage_spatial_sizes == (56, 28, 14, 7)
    assert tiny_spec().stage_spatial_sizes == (8, 4, 2, 1)


def test_forward_shapes_match_spec(backbone, small_images, spec):
    logits, feats = backbone.forward_with_features(torch.from_numpy(small_images))
    assert logits.shape == (6, spec.n_classes)
    for name, channels, size in zip(
        STAGE_NAMES, spec.channels, spec.stage_spatial_sizes
    ):
        assert feats[name].shape == (6, channels, size, size)
        flat = feats[name].reshape(6, -1)
        assert flat.shape[1] == dict(zip(STAGE_NAMES, spec.stage_flat_dims))[name]


def test_all_convolutions_are_bias_free(backbone):
    # A convolution bias feeding batch norm would be cancelled by the mean
    # subtraction and receive no gradient.
    for name, module in backbone.named_modules():
        if isinstance(module, torch.nn.Conv2d):
            assert module.bias is None, f"{name} has a bias"


def test_recurrent_stage_shares_weights_across_passes():
    stage = RecurrentStage(8, 16, times=3)
    convs = [m for m in stage.modules() if isinstance(m, torch.nn.Conv2d)]
    # conv_input, skip, and the three shared bottleneck convolutions: no
    # per-pass copies.
    assert len(convs) == 5
    assert len(stage.norm1) == 3 and len(stage.norm2) == 3 and len(stage.norm3) == 3


def test_recurrence_count_changes_output():
    torch.manual_seed(0)
    x = torch.rand(2, 8, 16, 16)
    stage_a = RecurrentStage(8, 16, times=1)
    stage_b = RecurrentStage(8, 16, times=2)
    stage_b.load_state_dict(stage_a.state_dict(), strict=False)
    stage_a.eval()
    stage_b.eval()
    with torch.no_grad():
        out_a = stage_a(x)
        out_b = stage_b(x)
    assert out_a.shape == out_b.shape
    assert not torch.allclose(out_a, out_b)


def test_seeded_build_is_reproducible(spec):
    a = build_backbone(spec, seed=3)
    b = build_backbone(spec, seed=3)
    c = build_backbone(spec, seed=4)
    for (ka, va), (kb, vb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert ka == kb
        assert torch.equal(va, vb)
    assert any(
        not torch.equal(va, vc)
        for va, vc in zip(a.state_dict().values(), c.state_dict().values())
    )


def test_input_validation(backbone):
    with pytest.raises(ValueError, match="shape"):
        backbone(torch.rand(2, 1, 32, 32))
    with pytest.raises(ValueError, match="32x32"):
        backbone(torch.rand(2, 3, 64, 64))


def test_input_normalization_applied(spec):
    model = build_backbone(spec, seed=0)
    model.eval()
    x = torch.rand(2, 3, 32, 32)
    with torch.no_grad():
        direct = model._normalize(x)
    expected = (x - torch.tensor(spec.norm_mean).view(1, 3, 1, 1)) / torch.tensor(
        spec.norm_std
    ).view(1, 3, 1, 1)
    assert torch.allclose(direct, expected)


def test_v1_stage_halves_twice():
    stage = FeedforwardStage(3, 16)
    out = stage(torch.rand(2, 3, 32, 32))
    assert out.shape == (2, 16, 8, 8)


def test_eval_mode_is_deterministic(backbone, small_images):
    backbone.eval()
    x = torch.from_numpy(small_images)
    with torch.no_grad():
        a = backbone(x)
        b = backbone(x)
    assert torch.equal(a, b)


def test_gradient_reaches_every_parameter(backbone, small_images):
    backbone.train()
    logits = backbone(torch.from_numpy(small_images))
    loss = logits.square().mean()
    loss.backward()
    missing = [
        name
        for name, p in backbone.named_parameters()
        if p.grad is None or not torch.isfinite(p.grad).all()
    ]
    assert missing == []
