import torch

from glasseg.backbone import BackboneConfig
from glasseg.losses import LossWeights, SupervisionTargets, total_loss
from glasseg.model import GlassSegmentationModel


def _tiny_model(seed=0, **kwargs):
    torch.manual_seed(seed)
    return GlassSegmentationModel(BackboneConfig(variant="tiny_random", reduced_channels=16), **kwargs)


class TestForward:
    def test_shapes_and_ranges_on_64(self):
        model = _tiny_model()
        model.eval()
        with torch.no_grad():
            out = model(torch.rand(2, 3, 64, 64))
        assert out.glass_pred.shape == (2, 1, 64, 64)
        assert out.edge_pred.shape == (2, 1, 16, 16)
        assert [l.glass_pred.shape[-1] for l in out.levels] == [16, 16, 8, 4]  # finest first
        assert out.glass_pred.min() >= 0.0 and out.glass_pred.max() <= 1.0

    def test_deterministic(self):
        model = _tiny_model(1)
        model.eval()
        x = torch.rand(1, 3, 64, 64)
        with torch.no_grad():
            a = model(x)
            b = model(x)
        assert torch.equal(a.glass_pred, b.glass_pred)
        assert torch.equal(a.edge_pred, b.edge_pred)

    def test_enhance_self_ablation_runs(self):
        model = _tiny_model(2, enhance_self=True)
        model.eval()
        with torch.no_grad():
            out = model(torch.rand(1, 3, 64, 64))
        assert out.glass_pred.shape == (1, 1, 64, 64)

    def test_negate_reverse_mode_runs(self):
        model = _tiny_model(3, reverse_mode="negate")
        model.eval()
        with torch.no_grad():
            out = model(torch.rand(1, 3, 64, 64))
        assert torch.isfinite(out.glass_pred).all()


class TestGradientFlow:
    def test_every_parameter_receives_gradient(self):
        model = _tiny_model(4)
        model.train()
        x = torch.rand(2, 3, 64, 64)
        gt = torch.zeros(2, 1, 64, 64)
        gt[:, :, 16:48, 16:48] = 1.0
        edge = torch.zeros_like(gt)
        edge[:, :, 14:50, 14:50] = 1.0
        edge[:, :, 18:46, 18:46] = 0.0
        targets = SupervisionTargets(glass=gt, edge=edge, fp=[1.0 - gt], fn=[gt.clone()])
        out = model(x)
        loss, _ = total_loss(out.levels, out.edge_pred, targets, LossWeights(window=7))
        loss.backward()
        missing = [
            name for name, p in model.named_parameters()
            if p.grad is None or float(p.grad.norm()) == 0.0
        ]
        assert missing == []
