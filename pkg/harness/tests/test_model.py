import pytest
import torch

from protoseg.model import (
    Decoder,
    PrototypeSegmenter,
    make_backbone,
    masked_prototype,
)


def test_tiny_backbone_grids_are_one_eighth():
    model = PrototypeSegmenter("tiny", proj_dim=16)
    x = torch.randn(2, 3, 96, 96)
    with torch.no_grad():
        feats = model.extract_features(x)
    assert [tuple(f.shape) for f in feats] == [
        (2, 32, 12, 12), (2, 48, 12, 12), (2, 64, 12, 12)]


def test_full_forward_shape():
    model = PrototypeSegmenter("tiny", proj_dim=16)
    support = torch.randn(2, 3, 64, 64)
    mask = torch.zeros(2, 1, 64, 64)
    mask[:, :, 10:40, 10:40] = 1.0
    query = torch.randn(2, 3, 64, 64)
    with torch.no_grad():
        logits = model(support, mask, query)
    assert tuple(logits.shape) == (2, 2, 64, 64)


def test_masked_prototype_matches_per_pixel_average():
    rng = torch.Generator().manual_seed(5)
    feats = torch.randn(3, 5, 6, 7, generator=rng)
    mask = (torch.rand(3, 1, 6, 7, generator=rng) > 0.6).float()
    mask[:, :, 2, 3] = 1.0  # every sample keeps at least one pixel
    proto = masked_prototype(feats, mask)
    assert tuple(proto.shape) == (3, 5, 1, 1)
    sel = mask[:, 0] > 0
    for b in range(3):
        for c in range(5):
            expected = feats[b, c][sel[b]].mean()
            assert abs(proto[b, c, 0, 0] - expected) <= 1e-5


def test_empty_mask_falls_back_to_unmasked_average():
    feats = torch.arange(2 * 3 * 4 * 4, dtype=torch.float32).reshape(2, 3, 4, 4)
    mask = torch.zeros(2, 1, 4, 4)
    mask[1, 0, 1, 2] = 1.0
    with pytest.warns(RuntimeWarning, match="empty"):
        proto = masked_prototype(feats, mask)
    # empty sample: plain average; the other is untouched by the fallback
    assert torch.allclose(proto[0, :, 0, 0], feats[0].mean(dim=(1, 2)))
    assert torch.allclose(proto[1, :, 0, 0], feats[1, :, 1, 2])


def test_backbone_is_frozen_and_stays_in_eval():
    model = PrototypeSegmenter("tiny", proj_dim=16)
    assert all(not p.requires_grad for p in model.backbone.parameters())
    assert all(p.requires_grad for p in model.head.parameters())
    assert all(p.requires_grad for p in model.decoder.parameters())
    model.train()
    assert model.training
    assert model.head.training
    assert not model.backbone.training


def test_decoder_triples_the_resolution_three_times():
    decoder = Decoder(24, dim=8)
    out = decoder(torch.randn(1, 24, 8, 8))
    assert tuple(out.shape) == (1, 2, 64, 64)


def test_unknown_backbone_name():
    with pytest.raises(ValueError, match="unknown backbone"):
        make_backbone("vgg")
