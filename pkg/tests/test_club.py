import math

import pytest
import torch
from torch.autograd import gradcheck
from torch.func import functional_call

from core.errors import DimensionError, NonFiniteError
from core.networks.belief_policy import DTYPE
from core.networks.club import (
    GaussianConditional, club_estimate, cond_log_likelihood, make_variational_optimizer,
    variational_loss, variational_update,
)


def _standard_normal_model(belief_dim=3, residual_dim=1, mean=0.0, logvar=0.0):
    model = GaussianConditional(belief_dim, residual_dim, hidden_dim=8)
    for net, bias in ((model.mean_net, mean), (model.logvar_net, logvar)):
        torch.nn.init.zeros_(net[-1].weight)
        torch.nn.init.constant_(net[-1].bias, bias)
    return model


def _model(seed=0):
    torch.manual_seed(seed)
    return GaussianConditional(3, 2, hidden_dim=8)


def _batch(m=64, belief_dim=3, residual_dim=2, seed=0):
    g = torch.Generator().manual_seed(seed)
    return (torch.randn(m, belief_dim, generator=g, dtype=DTYPE),
            torch.randn(m, residual_dim, generator=g, dtype=DTYPE))


def test_standard_normal_log_likelihood():
    model = _standard_normal_model()
    b = torch.randn(2, 3, dtype=DTYPE)
    z = torch.tensor([[0.0], [1.0]], dtype=DTYPE)
    ll = cond_log_likelihood(model, b, z)
    assert ll[0].item() == pytest.approx(-0.9189385, abs=1e-6)
    assert ll[1].item() == pytest.approx(-1.4189385, abs=1e-6)


def test_density_integrates_to_one():
    model = _standard_normal_model(mean=0.3, logvar=math.log(0.5))
    sigma = math.sqrt(0.5)
    low, high = 0.3 - 10 * sigma, 0.3 + 10 * sigma
    g = torch.Generator().manual_seed(1)
    z = low + (high - low) * torch.rand(100_000, 1, generator=g, dtype=DTYPE)
    b = torch.zeros(100_000, 3, dtype=DTYPE)
    integral = (high - low) * cond_log_likelihood(model, b, z).exp().mean().item()
    assert integral == pytest.approx(1.0, rel=0.02)


def test_identical_pairs_give_zero():
    model = _model()
    b = torch.randn(1, 3, dtype=DTYPE).expand(16, 3)
    z = torch.randn(1, 2, dtype=DTYPE).expand(16, 2)
    assert abs(club_estimate(model, b, z).item()) < 1e-12


def test_constant_residual_gives_zero_for_any_model():
    model = _model()
    b, _ = _batch(32)
    z = torch.full((32, 2), 0.7, dtype=DTYPE)
    assert abs(club_estimate(model, b, z).item()) < 1e-10


def test_closed_form_marginal_matches_full_pairing():
    model = _model()
    b, z = _batch(12)
    joint = cond_log_likelihood(model, b, z).mean()
    pairs = cond_log_likelihood(model, b.repeat_interleave(12, 0), z.repeat(12, 1)).mean()
    assert club_estimate(model, b, z).item() == pytest.approx((joint - pairs).item(), abs=1e-10)


def test_needs_two_samples():
    model = _model()
    b, z = _batch(1)
    with pytest.raises(DimensionError):
        club_estimate(model, b, z)


def test_zero_learning_rate_leaves_parameters():
    model = _model()
    before = [p.detach().clone() for p in model.parameters()]
    b, z = _batch()
    variational_update(model, make_variational_optimizer(model, 1e-3), b, z, lr=0.0)
    assert all(torch.equal(a, p) for a, p in zip(before, model.parameters()))


def test_small_steps_decrease_loss():
    model = _model()
    opt = torch.optim.SGD(model.parameters(), lr=1e-3)
    b, z = _batch(128)
    losses = [variational_update(model, opt, b, z) for _ in range(25)]
    assert all(later <= earlier for earlier, later in zip(losses, losses[1:]))
    assert variational_loss(model, b, z).item() <= losses[-1]


def test_non_finite_gradient_is_reported():
    model = _model()
    b, z = _batch(8)
    z[0, 0] = float("inf")
    with pytest.raises(NonFiniteError, match="parameter"):
        variational_update(model, make_variational_optimizer(model, 1e-3), b, z)


def test_variational_gradient_matches_finite_differences():
    model = GaussianConditional(3, 2, hidden_dim=5)
    b, z = _batch(6)
    names = [n for n, _ in model.named_parameters()]
    params = tuple(p.detach().clone().requires_grad_(True) for p in model.parameters())

    def fn(*ps):
        mean, logvar = functional_call(model, dict(zip(names, ps)), (b,))
        return 0.5 * (logvar + (z - mean) ** 2 / logvar.exp()).sum(-1).mean()

    assert gradcheck(fn, params, eps=1e-5, atol=1e-7, rtol=1e-4)


def _correlated(m, rho, g):
    b = torch.randn(m, 1, generator=g, dtype=DTYPE)
    z = rho * b + math.sqrt(1 - rho ** 2) * torch.randn(m, 1, generator=g, dtype=DTYPE)
    return b, z


@pytest.mark.slow
@pytest.mark.parametrize("rho", [0.0, 0.5, 0.8])
def test_gaussian_pairs_upper_bound(rho):
    torch.manual_seed(0)
    g = torch.Generator().manual_seed(int(rho * 10))
    model = GaussianConditional(1, 1, hidden_dim=32)
    opt = torch.optim.Adam(model.parameters(), lr=3e-3)
    for _ in range(3000):
        variational_update(model, opt, *_correlated(512, rho, g))
    with torch.no_grad():
        estimate = sum(club_estimate(model, *_correlated(512, rho, g)).item() for _ in range(20)) / 20

    true_mi = -0.5 * math.log(1 - rho ** 2)
    if rho == 0.0:
        assert abs(estimate) < 0.1
    else:
        # à l'optimum de q, la borne vaut rho^2 / (1 - rho^2)
        assert estimate >= true_mi
        assert estimate == pytest.approx(rho ** 2 / (1 - rho ** 2), rel=0.3)
