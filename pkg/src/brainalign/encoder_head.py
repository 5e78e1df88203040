"""Response-generation head: backbone stage activations to neural responses.

Each of the four stage activations is flattened and passed through its own
linear layer with ReLU to a fixed-width embedding; the four embeddings are
concatenated in stage order and a final linear layer maps them to the target
response dimensionality.  The head is the only module whose output is compared
against measured responses, so its input shapes are bound to one backbone
configuration at construction and checked on every call.
"""

from __future__ import annotations

import torch
from torch import nn

from .backbone import STAGE_NAMES, BackboneSpec

STAGE_EMBED_DIM = 128


class ResponseHead(nn.Module):
    """Per-stage linear embeddings concatenated into a linear response readout.

    Args:
        spec: backbone configuration supplying per-stage flattened sizes.
        target_dim: number of response features to generate.
        embed_dim: width of each per-stage embedding (concatenation is
            ``4 * embed_dim`` wide).
    """

    def __init__(self, spec: BackboneSpec, target_dim: int, embed_dim: int = STAGE_EMBED_DIM):
        super().__init__()
        if target_dim < 1:
            raise ValueError(f"target_dim must be >= 1, got {target_dim}")
        if embed_dim < 1:
            raise ValueError(f"embed_dim must be >= 1, got {embed_dim}")
        self.spec = spec
        self.target_dim = target_dim
        self.embed_dim = embed_dim
        self.stage_dims = dict(zip(STAGE_NAMES, spec.stage_flat_dims))
        self.stage_layers = nn.ModuleDict(
            {name: nn.Linear(dim, embed_dim) for name, dim in self.stage_dims.items()}
        )
        self.readout = nn.Linear(embed_dim * len(STAGE_NAMES), target_dim)
        self.act = nn.ReLU(inplace=True)

    def forward(self, stage_features: dict[str, torch.Tensor]) -> torch.Tensor:
        missing = [n for n in STAGE_NAMES if n not in stage_features]
        if missing:
            raise ValueError(f"stage features missing {missing}")
        embeddings = []
        for name in STAGE_NAMES:
            feat = stage_features[name]
            flat = feat.reshape(feat.shape[0], -1)
            expected = self.stage_dims[name]
            if flat.shape[1] != expected:
                raise ValueError(
                    f"stage {name} flattens to {flat.shape[1]} features, head was "
                    f"built for {expected}"
                )
            embeddings.append(self.act(self.stage_layers[name](flat)))
        return self.readout(torch.cat(embeddings, dim=1))


def build_response_head(
    spec: BackboneSpec, target_dim: int, seed: int = 0, embed_dim: int = STAGE_EMBED_DIM
) -> ResponseHead:
    """Construct a response head with seeded weight initialization."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        head = ResponseHead(spec, target_dim, embed_dim=embed_dim)
    return head
