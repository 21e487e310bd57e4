import numpy as np
import pytest

from treeucb.bench import (
    NoiseSpec,
    add_noise,
    contextual_wrap,
    draw_noise,
    goldstein_raw,
    himmelblau_raw,
    lipschitz_linf,
    make_rescaled,
    regret_accumulate,
    uniform_play,
)


@pytest.mark.parametrize("x, expected", [((3, 2), 0.0), ((0, 0), -170.0), ((5, 5), -890.0)])
def test_himmelblau_values(x, expected):
    assert himmelblau_raw(*x) == expected


@pytest.mark.parametrize("x, expected", [((0, -1), -3.0), ((0, 0), -600.0)])
def test_goldstein_values(x, expected):
    assert goldstein_raw(*x) == expected


def test_goldstein_never_above_max(rng):
    x = rng.uniform(-2, 2, (10_000, 2))
    v = goldstein_raw(x[:, 0], x[:, 1])
    assert np.all(np.isfinite(v)) and np.all(v <= -3)


def test_rescaled_optima():
    h = make_rescaled("himmelblau")
    assert h.f_min == pytest.approx(-890.0)
    assert h([0.3, 0.2]) == pytest.approx(1.0, abs=1e-6)
    g = make_rescaled("goldstein")
    assert g([0.0, -0.25]) == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("name", ["himmelblau", "goldstein"])
def test_rescaled_range_on_grid(name):
    f = make_rescaled(name)
    g = np.linspace(-0.5, 0.5, 1024)
    X, Y = np.meshgrid(g, g, indexing="ij")
    v = f(np.stack([X, Y], axis=-1))
    assert v.min() >= 0 and v.max() <= 1
    assert v.max() == pytest.approx(1.0, abs=1e-3)


def test_cross_resolution_drift():
    for name in ("himmelblau", "goldstein"):
        a, b = make_rescaled(name, 257), make_rescaled(name, 2049)
        assert abs(a.f_min - b.f_min) / (b.f_max - b.f_min) <= 1e-3


def test_grid_must_be_fine_enough():
    with pytest.raises(ValueError):
        make_rescaled("himmelblau", 100)


def test_zero_noise_is_exact():
    f = make_rescaled("himmelblau")
    noisy = add_noise(f, NoiseSpec("uniform", 0.0), np.random.default_rng(0))
    x = np.array([0.1, -0.2])
    assert noisy(x) == f(x)


def test_uniform_noise_is_centred():
    rng = np.random.default_rng(0)
    spec = NoiseSpec.parse("uniform:0.1")
    e = np.array([draw_noise(spec, rng) for _ in range(100_000)])
    assert abs(e.mean()) <= 0.002
    assert np.all(np.abs(e) <= 0.1)


def test_truncated_gaussian_is_clipped():
    rng = np.random.default_rng(0)
    spec = NoiseSpec.parse("truncated-gaussian:0.2")
    e = np.array([draw_noise(spec, rng) for _ in range(100_000)])
    assert np.all(np.abs(e) <= 0.6)


def test_noise_spec_parsing():
    assert NoiseSpec.parse("none").kind == "none"
    assert NoiseSpec.parse("truncated-gaussian:0.1:0.2").clip == 0.2
    assert str(NoiseSpec.parse("uniform:0.05")) == "uniform:0.05"
    with pytest.raises(ValueError):
        NoiseSpec.parse("cauchy:1")
    with pytest.raises(ValueError):
        NoiseSpec.parse("uniform")


def test_contextual_regret_nonnegative():
    c = contextual_wrap(make_rescaled("himmelblau"))
    ctx = c.contexts(3)
    rng = np.random.default_rng(1)
    for t in range(200):
        z = ctx(t)
        a = rng.uniform(-0.5, 0.5)
        assert c.best(z) - c(z, a) >= -1e-6


def test_context_stream_is_seeded():
    c = contextual_wrap(make_rescaled("goldstein"))
    a, b = c.contexts(5), c.contexts(5)
    assert [a(t)[0] for t in range(20)] == [b(t)[0] for t in range(20)]


def test_contextual_oracle_two_resolutions():
    f = make_rescaled("himmelblau")
    coarse = contextual_wrap(f, 4096)
    fine_a = np.linspace(-0.5, 0.5, 65536)
    rng = np.random.default_rng(2)
    for z in rng.uniform(-0.5, 0.5, 100):
        fine = f(np.column_stack([np.full(fine_a.size, z), fine_a])).max()
        assert abs(coarse.best(z) - fine) <= 1e-3
        assert coarse.best(z) >= fine - 1e-9


def test_regret_arithmetic():
    r = regret_accumulate([0.5, 0.7, 0.8], 1.0)
    assert np.allclose(r.cumulative, [0.5, 0.8, 1.0])
    assert r.average[-1] == pytest.approx(1 / 3)
    assert np.allclose(r.best_so_far, [0.5, 0.7, 0.8])
    assert regret_accumulate([1.0] * 5, 1.0).cumulative[-1] == 0


def test_regret_csv(tmp_path):
    path = tmp_path / "r.csv"
    regret_accumulate([0.5, 0.7], [1.0, 0.9]).write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,inst_regret,cum_regret,avg_regret,best_so_far"
    assert len(lines) == 3


def test_uniform_play_matches_grid_mean():
    f = make_rescaled("himmelblau")
    g = np.linspace(-0.5, 0.5, 1024)
    X, Y = np.meshgrid(g, g, indexing="ij")
    grid_mean = f(np.stack([X, Y], axis=-1)).mean()
    avg = regret_accumulate(uniform_play(f, 1000, seed=0), 1.0).average[-1]
    assert abs(avg - (1 - grid_mean)) <= 0.02


def test_regret_ignores_noise_seed():
    f = make_rescaled("goldstein")
    arms = np.random.default_rng(0).uniform(-0.5, 0.5, (50, 2))
    traces = []
    for seed in (1, 2):
        noisy = add_noise(f, NoiseSpec.parse("uniform:0.05"), np.random.default_rng(seed))
        [noisy(a) for a in arms]
        traces.append(regret_accumulate(f(arms), 1.0).cumulative)
    assert np.array_equal(*traces)


def test_lipschitz_estimate_bounds_differences(rng):
    f = make_rescaled("himmelblau")
    L = lipschitz_linf(f)
    a, b = rng.uniform(-0.5, 0.5, (2, 2000, 2))
    assert np.all(np.abs(f(a) - f(b)) <= L * np.max(np.abs(a - b), axis=1) + 1e-9)
