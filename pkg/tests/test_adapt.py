import numpy as np
import pytest
from numpy.testing import assert_array_equal

from metasaea.adapt import Surrogate, adapt, update
from metasaea.errors import TooFewPoints
from metasaea.gp import Dataset, fit_gp, neg_log_likelihood, predict_batch
from metasaea.kernel import TaskIncrements, pack_params
from metasaea.meta import MetaConfig, meta_train
from metasaea.numkit import RngStream
from metasaea.tasks import TaskSpec, eval_sinusoid, generate_dataset, sample_sinusoid


def sinusoid_experience(seed=0):
    rng = RngStream(seed)
    sources = []
    for t in range(50):
        spec = sample_sinusoid(rng.derive("task", t))
        sources.append(generate_dataset(spec, 10, "uniform", rng.derive("data", t))[0])
    cfg = MetaConfig(n_meta=100, dm_size=10, batch=10, hidden=(8, 8), seed=seed)
    params, _ = meta_train(sources, cfg)
    return params


def target_support(seed=1, n=10):
    rng = RngStream(seed, 77)
    spec = sample_sinusoid(rng.derive("target"))
    data = generate_dataset(spec, n, "uniform", rng.derive("support"))[0]
    return spec, data


EXPERIENCE = sinusoid_experience()


class TestAdapt:
    def test_zero_rate_keeps_pure_experience_predictions(self):
        _, data = target_support(seed=2)
        s = Surrogate(EXPERIENCE, lr_beta=0.0, adapt_steps=50)
        adapted = adapt(s, data)
        assert_array_equal(adapted.increments.d_log_theta, 0.0)
        assert_array_equal(adapted.increments.d_p, 0.0)
        direct = fit_gp(EXPERIENCE, None, data)
        xq = np.linspace(-5, 5, 20)[:, None]
        m_direct, v_direct = predict_batch(direct, xq)
        m_adapted, v_adapted = adapted.predict_batch(xq)
        assert_array_equal(m_adapted, m_direct)
        assert_array_equal(v_adapted, v_direct)

    def test_zero_steps_refits_only(self):
        _, data = target_support(seed=3)
        inc = TaskIncrements(np.array([0.2]), np.array([-0.1]))
        s = Surrogate(EXPERIENCE, increments=inc)
        adapted = adapt(s, data, steps=0)
        assert adapted.increments is inc
        assert adapted.state is not None
        assert adapted.archive is data

    def test_adaptation_does_not_increase_loss(self):
        for seed in range(4, 10):
            _, data = target_support(seed=seed, n=10)
            s = Surrogate(EXPERIENCE, lr_beta=1e-3, adapt_steps=100)
            before = neg_log_likelihood(EXPERIENCE, None, data).value
            adapted = adapt(s, data)
            after = neg_log_likelihood(EXPERIENCE, adapted.increments, data).value
            assert after <= before

    def test_experience_params_frozen(self):
        _, data = target_support(seed=11)
        snapshot = pack_params(EXPERIENCE).copy()
        s = Surrogate(EXPERIENCE, lr_beta=1e-2, adapt_steps=30)
        adapted = adapt(s, data)
        assert adapted.experience is EXPERIENCE
        assert_array_equal(pack_params(EXPERIENCE), snapshot)


class TestUpdate:
    def test_accept_requires_strict_improvement(self):
        _, archive = target_support(seed=12, n=12)
        s = adapt(Surrogate(EXPERIENCE, adapt_steps=20), archive)
        res = update(s, archive)
        if res.accepted:
            assert res.e1 < res.e0
        else:
            assert res.e1 >= res.e0

    def test_rollback_keeps_increments_bit_identical(self):
        _, archive = target_support(seed=13, n=10)
        # a deliberately mis-set increment the short update cannot fix
        inc = TaskIncrements(np.array([3.0]), np.array([0.0]))
        s = Surrogate(EXPERIENCE, increments=inc, lr_beta=0.0)
        res = update(s, archive)
        assert not res.accepted
        assert res.surrogate.increments is inc
        assert res.surrogate.state is not None
        assert len(res.surrogate.archive) == len(archive)

    def test_tie_rolls_back(self):
        _, archive = target_support(seed=14, n=8)
        s = adapt(Surrogate(EXPERIENCE), archive)
        res = update(s, archive, steps=0)  # candidate identical -> e0 == e1
        assert res.e0 == res.e1
        assert not res.accepted
        assert res.surrogate.increments is s.increments

    def test_accepted_update_improves_loo(self):
        # start from zero increments with a rate large enough to move
        g = RngStream(15).generator()
        spec, _ = target_support(seed=15)
        xs = g.uniform(-5, 5, size=(12, 1))
        ys = eval_sinusoid(spec, xs[:, 0])
        archive = Dataset(xs, ys, [[-5.0, 5.0]])
        s = Surrogate(EXPERIENCE, increments=TaskIncrements.zeros(1), lr_beta=0.05)
        res = update(s, archive, steps=25)
        from metasaea.gp import loo_mse

        final = loo_mse(EXPERIENCE, res.surrogate.increments, archive)
        assert final <= res.e0 + 1e-12

    def test_too_few_points(self):
        xs = np.array([[0.0], [1.0]])
        archive = Dataset(xs, [0.0, 1.0], [[-5.0, 5.0]])
        with pytest.raises(TooFewPoints):
            update(Surrogate(EXPERIENCE), archive)

    def test_zero_increment_equivalence(self):
        _, data = target_support(seed=16)
        s = Surrogate(EXPERIENCE, increments=TaskIncrements.zeros(1))
        s = adapt(s, data, steps=0)
        direct = fit_gp(EXPERIENCE, None, data)
        xq = np.linspace(-5, 5, 11)[:, None]
        m_s, v_s = s.predict_batch(xq)
        m_d, v_d = predict_batch(direct, xq)
        assert_array_equal(m_s, m_d)
        assert_array_equal(v_s, v_d)
