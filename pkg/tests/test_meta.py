import numpy as np
import pytest
from numpy.testing import assert_array_equal

from metasaea.errors import SchemaError, VersionMismatch
from metasaea.gp import Dataset
from metasaea.kernel import pack_params
from metasaea.meta import (
    MetaConfig,
    load_experiences,
    meta_train,
    save_experiences,
)
from metasaea.numkit import RngStream
from metasaea.tasks import generate_dataset, sample_sinusoid


def sinusoid_sources(count, size, seed):
    rng = RngStream(seed)
    sources = []
    for t in range(count):
        spec = sample_sinusoid(rng.derive("task", t))
        sources.append(generate_dataset(spec, size, "uniform", rng.derive("data", t))[0])
    return sources


def quadratic_sources(count, size, seed, d=2):
    rng = RngStream(seed)
    sources = []
    for t in range(count):
        g = rng.derive(t).generator()
        center = g.uniform(0.2, 0.8, d)
        xs = g.uniform(0, 1, size=(size, d))
        ys = ((xs - center) ** 2).sum(axis=1)
        sources.append(Dataset(xs, ys, [[0.0, 1.0]] * d))
    return sources


class TestMetaTrain:
    def test_single_batch_single_update(self):
        sources = quadratic_sources(1, 8, seed=1)
        cfg = MetaConfig(n_meta=1, dm_size=8, batch=1, hidden=(8,), seed=3)
        params, trace = meta_train(sources, cfg)
        assert len(trace.iterations) == 1
        # one update moved the parameters
        cfg0 = MetaConfig(n_meta=1, dm_size=8, batch=1, hidden=(8,), seed=3, lr_alpha=0.0)
        params0, _ = meta_train(sources, cfg0)
        assert not np.array_equal(pack_params(params), pack_params(params0))

    def test_zero_learning_rate_keeps_initialization(self):
        sources = quadratic_sources(3, 10, seed=2)
        cfg = MetaConfig(n_meta=20, dm_size=6, batch=2, hidden=(8, 8), seed=5, lr_alpha=0.0)
        params, trace = meta_train(sources, cfg)
        from metasaea.kernel import init_deep_kernel_params

        init = init_deep_kernel_params(2, RngStream(5).derive("init"), hidden=(8, 8))
        assert_array_equal(pack_params(params), pack_params(init))
        assert len(trace.iterations) == 10

    def test_floor_division_iteration_count(self):
        sources = quadratic_sources(4, 8, seed=3)
        cfg = MetaConfig(n_meta=7, dm_size=4, batch=3, hidden=(4,), seed=1)
        _, trace = meta_train(sources, cfg)
        assert len(trace.iterations) == 7 // 3

    def test_determinism(self):
        sources = sinusoid_sources(20, 10, seed=4)
        cfg = MetaConfig(n_meta=50, dm_size=6, batch=5, hidden=(8, 8), seed=9)
        p1, _ = meta_train(sources, cfg)
        p2, _ = meta_train(sources, cfg)
        assert_array_equal(pack_params(p1), pack_params(p2))

    def test_clamps_hold_after_training(self):
        sources = sinusoid_sources(10, 10, seed=5)
        cfg = MetaConfig(n_meta=100, dm_size=8, batch=5, hidden=(8,), seed=2, lr_alpha=0.05)
        params, _ = meta_train(sources, cfg)
        theta = np.exp(params.base.log_theta)
        assert np.all(theta >= 1e-5 - 1e-12) and np.all(theta <= 100.0 + 1e-12)
        assert np.all(params.base.p >= 1.0) and np.all(params.base.p <= 2.0)

    def test_no_increment_carryover_within_batch(self):
        # the same dataset repeated in one batch must yield identical
        # per-dataset losses: increments are re-initialized every time
        src = quadratic_sources(1, 8, seed=6)[0]
        cfg = MetaConfig(n_meta=3, dm_size=8, batch=3, hidden=(8,), seed=7, inner_steps=2)
        _, trace = meta_train([src], cfg)
        losses = trace.iterations[0].losses
        assert len(losses) == 3
        # row order of the subsample varies, so equality holds only to
        # float noise; any carryover of the 2 inner steps would move the
        # loss by far more than this
        assert np.allclose(losses, losses[0], rtol=1e-9)

    def test_inner_steps_knob_changes_result(self):
        sources = quadratic_sources(4, 10, seed=8)
        base = dict(n_meta=10, dm_size=8, batch=2, hidden=(8,), seed=11)
        p0, _ = meta_train(sources, MetaConfig(**base))
        p2, _ = meta_train(sources, MetaConfig(**base, inner_steps=2))
        assert not np.array_equal(pack_params(p0), pack_params(p2))

    def test_training_reduces_loss_on_sinusoids(self):
        sources = sinusoid_sources(200, 10, seed=12)
        cfg = MetaConfig(n_meta=400, dm_size=10, batch=10, seed=13)
        _, trace = meta_train(sources, cfg)
        losses = trace.mean_losses
        tenth = max(1, len(losses) // 10)
        assert np.median(losses[-tenth:]) < np.median(losses[:tenth])


class TestExperienceStore:
    def test_round_trip_bit_identical(self, tmp_path):
        sources = quadratic_sources(2, 8, seed=20)
        cfg = MetaConfig(n_meta=4, dm_size=6, batch=2, hidden=(8, 8), seed=21)
        params, _ = meta_train(sources, cfg)
        path = tmp_path / "experiences.json"
        save_experiences(params, path)
        loaded = load_experiences(path)
        assert_array_equal(pack_params(loaded), pack_params(params))

    def test_identity_map_round_trip(self, tmp_path):
        from metasaea.kernel import identity_kernel_params

        params = identity_kernel_params(4, log_theta=0.31, p=1.73)
        path = tmp_path / "e.json"
        save_experiences(params, path)
        loaded = load_experiences(path)
        assert loaded.mlp.layers == ()
        assert_array_equal(pack_params(loaded), pack_params(params))

    def test_wrong_version(self, tmp_path):
        from metasaea.kernel import identity_kernel_params

        path = tmp_path / "e.json"
        save_experiences(identity_kernel_params(2), path)
        doc = path.read_text()
        path.write_text(doc.replace('"version": 1', '"version": 99'))
        with pytest.raises(VersionMismatch):
            load_experiences(path)

    def test_truncated_array_names_field(self, tmp_path):
        from metasaea.kernel import identity_kernel_params

        import json

        path = tmp_path / "e.json"
        save_experiences(identity_kernel_params(3), path)
        doc = json.loads(path.read_text())
        doc["log_theta"] = doc["log_theta"][:-1]
        path.write_text(json.dumps(doc))
        with pytest.raises(SchemaError, match="log_theta"):
            load_experiences(path)

    def test_missing_field_names_field(self, tmp_path):
        import json

        from metasaea.kernel import identity_kernel_params

        path = tmp_path / "e.json"
        save_experiences(identity_kernel_params(3), path)
        doc = json.loads(path.read_text())
        del doc["p"]
        path.write_text(json.dumps(doc))
        with pytest.raises(SchemaError, match="'p'"):
            load_experiences(path)
