import csv

import numpy as np
import pytest

from blwbench.data import prepare_synthetic
from blwbench.errors import ConfigurationError, NumericError
from blwbench.models import build_model, checkpoint_load, forward
from blwbench.train import RunConfig, format_config, load_config, mean_ssd, parse_config, train_model


@pytest.fixture(scope="module")
def tiny():
    return prepare_synthetic(seed=3, n_records=6, beats_per_record=4, n_test_records=1)


def small_model(seed=0):
    return build_model("deepfilter", widths=(8,) * 6, seed=seed)


class TestConfig:
    def test_defaults(self):
        c = RunConfig()
        assert (c.batch_size, c.initial_lr, c.lam, c.max_epochs) == (32, 1e-3, 50, 100_000)
        assert (c.patience_lr, c.patience_stop, c.min_lr) == (2, 10, 1e-10)

    def test_parse(self):
        c = parse_config("# comment\nmodel = vanilla_l\nbatch_size=16  # inline\n\ninitial_lr = 5e-4\n"
                         "deterministic = false\nmax_epochs = 1e3\n")
        assert (c.model, c.batch_size, c.initial_lr, c.deterministic, c.max_epochs) == \
            ("vanilla_l", 16, 5e-4, False, 1000)

    @pytest.mark.parametrize("text,line", [("bogus = 1", 1), ("\nbatch_size = x", 2), ("model", 1)])
    def test_errors_name_line(self, text, line):
        with pytest.raises(ConfigurationError, match=f"line {line}"):
            parse_config(text)

    def test_round_trip(self, tmp_path):
        c = RunConfig(model="multibranch", seed=7, lam=10.0, prd_form="conventional")
        path = tmp_path / "run.config"
        path.write_text(format_config(c))
        assert load_config(path) == c


class TestTrain:
    def test_constant_metric_stops_at_epoch_11(self, tiny):
        calls = []
        r = train_model(small_model(), tiny.noisy, tiny.clean, tiny.noisy, tiny.clean, RunConfig(),
                        monitor=lambda m, e: calls.append(e) or 1.0)
        # one epoch sets the best value, then ten stale epochs
        assert r.epochs_run == 11 and r.stop_reason == "early_stop" and r.best_epoch == 1
        assert [h.lr for h in r.history][:3] == [1e-3, 1e-3, 1e-3]
        assert r.history[3].lr == 5e-4

    def test_lr_halves_on_plateau(self, tiny):
        r = train_model(small_model(), tiny.noisy, tiny.clean, tiny.noisy, tiny.clean, RunConfig(),
                        monitor=lambda m, e: 1.0)
        lrs = [h.lr for h in r.history]
        assert lrs == [1e-3] * 3 + [5e-4] * 2 + [2.5e-4] * 2 + [1.25e-4] * 2 + [6.25e-5] * 2

    def test_max_epochs(self, tiny):
        r = train_model(small_model(), tiny.noisy, tiny.clean, tiny.noisy, tiny.clean, RunConfig(max_epochs=2))
        assert r.epochs_run == 2 and r.stop_reason == "max_epochs"

    def test_loss_decreases_and_log(self, tiny, tmp_path):
        log_path = tmp_path / "log.csv"
        ckpt = tmp_path / "m.ckpt"
        model = small_model()
        r = train_model(model, tiny.noisy, tiny.clean, tiny.noisy, tiny.clean, RunConfig(max_epochs=15),
                        log_path=log_path, checkpoint_path=ckpt)
        assert r.history[-1].train_loss < r.history[0].train_loss
        with open(log_path) as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == ["epoch", "train_loss", "val_ssd", "lr", "saved"]
        assert len(rows) == r.epochs_run
        saved = [float(row["val_ssd"]) for row in rows if row["saved"] == "1"]
        assert saved and all(b <= a for a, b in zip(saved, saved[1:]))
        # the model ends on the best weights, which is what the checkpoint holds
        best = checkpoint_load(ckpt)
        assert best.metadata["epoch"] == r.best_epoch
        assert mean_ssd(model, tiny.noisy, tiny.clean) == pytest.approx(r.best_val_ssd, rel=1e-12)
        x = tiny.noisy[:3, None, :]
        assert np.array_equal(forward(best, x), forward(model, x))

    def test_deterministic(self, tiny):
        runs = []
        for _ in range(2):
            m = small_model()
            train_model(m, tiny.noisy, tiny.clean, tiny.noisy, tiny.clean, RunConfig(max_epochs=3))
            runs.append(forward(m, tiny.noisy[:2, None, :]))
        assert np.array_equal(*runs)

    def test_nan_loss_names_epoch_and_step(self, tiny):
        noisy = tiny.noisy.copy()
        noisy[:] = np.nan
        with pytest.raises(NumericError, match="epoch 1, step 0"):
            train_model(small_model(), noisy, tiny.clean, tiny.noisy, tiny.clean, RunConfig(max_epochs=2))

    def test_empty_training_set(self, tiny):
        with pytest.raises(ConfigurationError):
            train_model(small_model(), tiny.noisy[:0], tiny.clean[:0], tiny.noisy, tiny.clean, RunConfig())

    def test_float32_option(self, tiny):
        m = build_model("deepfilter", widths=(8,) * 6, seed=0, dtype=np.float32)
        r = train_model(m, tiny.noisy, tiny.clean, tiny.noisy, tiny.clean, RunConfig(max_epochs=2))
        assert np.isfinite(r.best_val_ssd)
        assert all(t.data.dtype == np.float32 for t in m.parameters().values())
