import math

import numpy as np
import pytest
from scipy import stats

from blogspace.distributions import Distribution
from blogspace.errors import EmptyDataError, FitError
from blogspace.ingest import EventLog, EventRecord, Kind
from blogspace.synthgen import SynthConfig, generate
from blogspace.tempstats import (
    QExpFit, TimeSeries, activity_series, all_activity_series, fit_powerlaw, fit_qexp,
    fluctuation_scaling, interevent_distribution, interevent_samples, power_spectrum, q_from_tail_slope,
    qexp_bin_means, qexp_eval, read_scaling_tsv, read_series_tsv, read_spectrum_tsv, response_time_samples,
    write_event_times, write_scaling_tsv, write_series_tsv, write_spectrum_tsv,
)

from conftest import ev, log_from


def lomax_for(q, t_star):
    """q-exponential with 1 < q < 2 is a Lomax law; scipy gives an independent sampler/CDF."""
    return stats.lomax((2 - q) / (q - 1), scale=t_star / (q - 1))


def user_log(times, user="u"):
    recs = [EventRecord(f"p{i}", Kind.POST, user, f"p{i}", None, t) for i, t in enumerate(times)]
    return EventLog(recs)


@pytest.fixture(scope="module")
def big_synth():
    """About 10^5 events with the default Pareto(1.5) gaps and q=1.55, t*=60 kernel."""
    return generate(SynthConfig(users_per_group=200, seed=21))


# -- intervals ------------------------------------------------------------------

def test_interevent_example():
    assert sorted(interevent_samples(user_log([0, 5, 7])).tolist()) == [2, 5]


def test_interevent_needs_two_events():
    log = EventLog([EventRecord("p1", Kind.POST, "a", "p1", None, 0), EventRecord("p2", Kind.POST, "b", "p2", None, 4)])
    with pytest.raises(EmptyDataError):
        interevent_samples(log)


def test_interevent_tail_matches_pareto_sampler(big_synth):
    log, _ = big_synth
    assert len(log) >= 100_000
    fit = fit_powerlaw(interevent_distribution(log))
    assert abs(fit.exponent - 1.5) <= 0.1


# -- activity series --------------------------------------------------------------

def test_activity_example():
    ts = activity_series(user_log([0, 30, 90]), "u", 60)
    assert ts.counts.tolist() == [2, 1]


def test_activity_full_span_is_one_bin():
    ts = activity_series(user_log([0, 30, 90]), "u", 91)
    assert ts.counts.tolist() == [3]


def test_post_series_counts_comments():
    log = log_from(ev("p1", "post", "a", "p1", 10), ev("c1", "comment", "b", "p1", 12),
                   ev("c2", "comment", "c", "p1", 75))
    ts = activity_series(log, "p1", 60)
    assert ts.start == 10 and ts.counts.tolist() == [1, 1]


def test_unknown_owner_and_bad_window():
    log = user_log([0, 1])
    with pytest.raises(KeyError):
        activity_series(log, "nobody", 60)
    with pytest.raises(ValueError):
        activity_series(log, "u", 0)


def test_series_sum_equals_event_count(small_synth):
    log, _ = small_synth
    rng = np.random.default_rng(4)
    users = sorted(log.by_user)
    posts = [p.event_id for p in log.posts]
    for _ in range(100):
        if rng.random() < 0.5:
            u = users[rng.integers(len(users))]
            ts = activity_series(log, u, int(rng.integers(1, 500)), "user")
            assert ts.counts.sum() == len(log.by_user[u])
        else:
            p = posts[rng.integers(len(posts))]
            ts = activity_series(log, p, int(rng.integers(1, 500)), "post")
            assert ts.counts.sum() == len(log.post_comments(p))


# -- fluctuation scaling ----------------------------------------------------------

def poisson_battery(seed=0, n=200, bins=400):
    rng = np.random.default_rng(seed)
    rates = 10 ** rng.uniform(-1, 2, n)  # three decades
    return [TimeSeries(f"s{i}", 60, 0, rng.poisson(r, bins)) for i, r in enumerate(rates)]


def test_scaled_copies_give_mu_one():
    rng = np.random.default_rng(1)
    f = rng.poisson(5, 300)
    series = [TimeSeries(f"s{a}", 60, 0, a * f) for a in range(1, 30)]
    assert abs(fluctuation_scaling(series).mu - 1.0) < 1e-6


def test_poisson_gives_mu_half():
    assert abs(fluctuation_scaling(poisson_battery()).mu - 0.5) <= 0.05


def test_rescaling_leaves_mu_invariant():
    base = poisson_battery(seed=2)
    r1 = fluctuation_scaling(base)
    a = 7.0
    r2 = fluctuation_scaling([TimeSeries(t.owner, t.t_win, t.start, a * t.counts) for t in base])
    assert abs(r1.mu - r2.mu) < 1e-9
    assert math.isclose(r2.c, r1.c * a ** (1 - r1.mu), rel_tol=1e-9)


def test_zero_variance_excluded_and_minimum_points():
    series = poisson_battery(n=12) + [TimeSeries("flat", 60, 0, np.full(50, 3))]
    res = fluctuation_scaling(series)
    assert res.excluded == ["flat"] and len(res.points) == 12
    with pytest.raises(EmptyDataError):
        fluctuation_scaling(poisson_battery(n=9))


def test_blog_like_traffic_scaling_is_documented(big_synth):
    # correlated synthetic traffic; reference value for real blogs is about 0.88
    mu = fluctuation_scaling(all_activity_series(big_synth[0], 1440, "user")).mu
    print(f"blog-like synthetic user traffic: mu = {mu:.3f}")
    assert 0.5 <= mu <= 1.0


# -- power spectrum ----------------------------------------------------------------

def dft_oracle(x):
    n = len(x)
    x = x - x.mean()
    k = np.arange(1, n // 2 + 1)
    t = np.arange(n)
    coef = np.array([np.sum(x * np.exp(-2j * np.pi * kk * t / n)) for kk in k])
    p = np.abs(coef) ** 2 / n ** 2
    p[k < n / 2] *= 2
    return k / n, p


def test_cosine_peak():
    t = np.arange(256)
    ps = power_spectrum(TimeSeries("c", 1, 0, 10 + 5 * np.cos(2 * np.pi * t / 16)))
    assert ps.frequency[np.argmax(ps.power)] == pytest.approx(1 / 16)
    others = np.delete(ps.power, np.argmax(ps.power))
    assert others.max() < 1e-12 * ps.power.max() + 1e-20


def test_white_noise_flat():
    rng = np.random.default_rng(3)
    avg = np.mean([power_spectrum(TimeSeries("w", 1, 0, rng.poisson(4, 512))).power for _ in range(10)], axis=0)
    assert avg.max() <= 5 * np.median(avg)


def test_constant_series_zero_power():
    ps = power_spectrum(TimeSeries("k", 1, 0, np.full(64, 3)))
    assert np.all(ps.power == 0)


@pytest.mark.parametrize("n", [16, 17, 64, 101])
def test_periodogram_matches_dft_and_parseval(n):
    x = np.random.default_rng(n).poisson(3, n).astype(float)
    ps = power_spectrum(TimeSeries("x", 1, 0, x))
    f, p = dft_oracle(x)
    assert np.allclose(ps.frequency, f) and np.allclose(ps.power, p, rtol=1e-10, atol=1e-12)
    assert math.isclose(ps.power.sum(), x.var(), rel_tol=1e-9)


def test_too_few_bins():
    with pytest.raises(EmptyDataError):
        power_spectrum(TimeSeries("x", 1, 0, np.arange(15)))


# -- response times ---------------------------------------------------------------

def test_response_examples():
    log = log_from(ev("p1", "post", "a", "p1", 10), ev("c1", "comment", "b", "p1", 12),
                   ev("c2", "comment", "c", "p1", 30), ev("p2", "post", "a", "p2", 40),
                   ev("c3", "comment", "c", "p2", 40))
    assert sorted(response_time_samples(log).tolist()) == [0, 2, 20]


def test_response_count_equals_comments(small_synth):
    log, _ = small_synth
    assert response_time_samples(log).size == log.n_comments


def test_response_needs_comments():
    with pytest.raises(EmptyDataError):
        response_time_samples(user_log([0, 1]))


def test_synth_response_matches_kernel(big_synth):
    log, _ = big_synth
    horizon = SynthConfig().horizon
    law = lomax_for(1.55, 60.0)
    post_ts = {p.event_id: p.ts for p in log.posts}
    room = np.array([horizon - post_ts[c.post] for c in log.comments], dtype=float)
    samples = response_time_samples(log)
    assert samples.size >= 100_000
    values, counts = np.unique(samples, return_counts=True)
    emp = np.cumsum(counts) / samples.size
    # delays are floored minutes, truncated at each post's remaining horizon
    f_room = law.cdf(room)
    model = np.array([np.mean(np.minimum(law.cdf(v + 1.0) / f_room, 1.0)) for v in values])
    assert np.max(np.abs(emp - model)) < 0.02


# -- q-exponential ------------------------------------------------------------------

def test_qexp_eval_examples():
    p = QExpFit(1.5, 100.0, 3.0)
    assert qexp_eval(p, 0.0) == pytest.approx(3.0)
    assert qexp_eval(QExpFit(2.0, 1.0, 1.0), 1.0) == pytest.approx(0.5)
    near = QExpFit(1.0 + 1e-9, 50.0, 2.0)
    assert qexp_eval(near, 30.0) == pytest.approx(2.0 * math.exp(-30.0 / 50.0), rel=1e-12)


def test_qexp_eval_matches_lomax_density():
    q, t = 1.4, 80.0
    law = lomax_for(q, t)
    x = np.linspace(0, 2000, 50)
    assert np.allclose(qexp_eval(QExpFit(q, t, law.pdf(0.0)), x), law.pdf(x), rtol=1e-10)


def test_qexp_eval_domain_and_monotone():
    with pytest.raises(ValueError):
        qexp_eval(QExpFit(0.5, 10.0, 1.0), 25.0)  # base 1 - 0.5*2.5 < 0
    with pytest.raises(ValueError):
        qexp_eval(QExpFit(1.5, 10.0, 1.0), -1.0)
    y = qexp_eval(QExpFit(1.3, 20.0, 1.0), np.linspace(0, 1e4, 500))
    assert np.all(np.diff(y) < 0)


def test_bin_means_integrate_density():
    from scipy.integrate import quad
    q, t = 1.5, 40.0
    lo, hi = np.array([0.0, 3.0, 100.0]), np.array([3.0, 10.0, 900.0])
    got = qexp_bin_means(q, t, lo, hi)
    for g, a, b in zip(got, lo, hi):
        ref = quad(lambda x: float(qexp_eval(QExpFit(q, t, 1.0), x)), a, b)[0] / (b - a)
        assert g == pytest.approx(ref, rel=1e-8)


def test_fit_qexp_recovers_parameters():
    samples = lomax_for(1.5, 100.0).rvs(100_000, random_state=np.random.default_rng(7))
    fit = fit_qexp(samples)
    assert abs(fit.q - 1.5) <= 0.05
    assert abs(fit.t_star - 100.0) <= 10.0
    assert fit.tail_slope == pytest.approx(1 / (fit.q - 1))


def test_fit_qexp_exponential_gives_q_one():
    samples = np.random.default_rng(8).exponential(100.0, 100_000)
    assert abs(fit_qexp(samples).q - 1.0) <= 0.05


def test_fit_qexp_needs_samples():
    with pytest.raises(EmptyDataError):
        fit_qexp(np.arange(999.0))


def test_tail_slope_mapping():
    for slope in (2.8, 2.3):
        q = q_from_tail_slope(slope)
        assert q == pytest.approx(1 + 1 / slope)
        assert QExpFit(q, 1.0, 1.0).tail_slope == pytest.approx(slope)


# -- power-law fits -----------------------------------------------------------------

def test_exact_bins_slope_two():
    edges = 2.0 ** (np.arange(21) / 4)
    centers = np.sqrt(edges[:-1] * edges[1:])
    d = Distribution.from_table(edges[:-1], edges[1:], 3.0 * centers ** -2.0)
    fit = fit_powerlaw(d, (edges[0], edges[-1]))
    assert abs(fit.exponent - 2.0) < 1e-6 and fit.residual < 1e-9


def test_flat_distribution_slope_zero():
    samples = np.random.default_rng(0).uniform(1, 1000, 200_000)
    assert abs(fit_powerlaw(Distribution.from_samples(samples), (2, 900)).exponent) < 0.05


def test_pareto_samples_slope():
    x = stats.pareto(1.5).rvs(1_000_000, random_state=np.random.default_rng(9))  # pdf ~ x^-2.5
    assert abs(fit_powerlaw(Distribution.from_samples(x)).exponent - 2.5) <= 0.05


def test_fit_needs_five_bins():
    d = Distribution.from_samples(np.random.default_rng(0).uniform(1, 2, 1000))
    with pytest.raises(FitError):
        fit_powerlaw(d, (1.0, 1.3))
    with pytest.raises(ValueError):
        fit_powerlaw(d, (2.0, 1.0))


def test_ccdf_target():
    x = stats.pareto(1.5).rvs(200_000, random_state=np.random.default_rng(10))
    d = Distribution.from_samples(x, cumulative=True)
    assert abs(fit_powerlaw(d, (2, 200)).exponent - 1.5) < 0.05


# -- files ------------------------------------------------------------------------

def test_series_and_scaling_roundtrip(tmp_path):
    ts = TimeSeries("u1", 60, 120, np.array([1, 0, 4, 2]))
    write_series_tsv(ts, tmp_path / "s.tsv")
    back = read_series_tsv(tmp_path / "s.tsv")
    assert (back.owner, back.t_win, back.start) == ("u1", 60, 120) and back.counts.tolist() == [1, 0, 4, 2]
    res = fluctuation_scaling(poisson_battery(n=15))
    write_scaling_tsv(res, tmp_path / "sc.tsv", {"t_win": 60})
    meta, pts = read_scaling_tsv(tmp_path / "sc.tsv")
    assert meta["mu"] == res.mu and meta["t_win"] == 60
    assert [(p.owner, p.mean, p.sigma) for p in pts] == [(p.owner, p.mean, p.sigma) for p in res.points]


def test_spectrum_and_event_times_files(tmp_path):
    ps = power_spectrum(TimeSeries("u9", 1, 0, np.arange(32) % 5))
    write_spectrum_tsv(ps, tmp_path / "p.tsv")
    back = read_spectrum_tsv(tmp_path / "p.tsv")
    assert back.owner == "u9" and np.array_equal(back.power, ps.power)
    write_event_times(user_log([3, 8]), ["u"], tmp_path / "e.tsv")
    assert (tmp_path / "e.tsv").read_text() == "owner\tts\nu\t3\nu\t8\n"
