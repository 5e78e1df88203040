"""Response head: shape binding, stage order, and deterministic builds."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from brainalign.backbone import STAGE_NAMES
from brainalign.encoder_head import ResponseHead, build_response_head


def _features(spec, n=3, seed=0):
    torch.manual_seed(seed)
    return {
        name: torch.rand(n, c, s, s)
        for name, c, s in zip(STAGE_NAMES, spec.channels, spec.stage_spatial_sizes)
    }


def test_output_shape(spec):
    head = build_response_head(spec, target_dim=20, seed=0)
    out = head(_features(spec))
    assert out.shape == (3, 20)


def test_concatenation_width_is_four_embeddings(spec):
    head = build_response_head(spec, target_dim=5, seed=0, embed_dim=16)
    assert head.readout.in_features == 4 * 16


def test_stage_lookup_is_by_name_not_dict_order(spec):
    head = build_response_head(spec, target_dim=8, seed=0)
    feats = _features(spec)
    reordered = {name: feats[name] for name in reversed(STAGE_NAMES)}
    with torch.no_grad():
        assert torch.equal(head(feats), head(reordered))


def test_missing_stage_raises(spec):
    head = build_response_head(spec, target_dim=8, seed=0)
    feats = _features(spec)
    del feats["V4"]
    with pytest.raises(ValueError, match="V4"):
        head(feats)


def test_shape_drift_raises(spec):
    head = build_response_head(spec, target_dim=8, seed=0)
    feats = _features(spec)
    feats["V2"] = torch.rand(3, spec.channels[1], 8, 8)  # wrong resolution
    with pytest.raises(ValueError, match="V2"):
        head(feats)


def test_seeded_build_reproducible(spec):
    a = build_response_head(spec, target_dim=8, seed=5)
    b = build_response_head(spec, target_dim=8, seed=5)
    for va, vb in zip(a.state_dict().values(), b.state_dict().values()):
        assert torch.equal(va, vb)


def test_invalid_dims_rejected(spec):
    with pytest.raises(ValueError, match="target_dim"):
        ResponseHead(spec, target_dim=0)
    with pytest.raises(ValueError, match="embed_dim"):
        ResponseHead(spec, target_dim=4, embed_dim=0)


def test_gradient_flows_to_all_head_parameters(spec):
    head = build_response_head(spec, target_dim=8, seed=0)
    out = head(_features(spec))
    out.square().mean().backward()
    for name, p in head.named_parameters():
        assert p.grad is not None, name
        assert torch.isfinite(p.grad).all(), name
