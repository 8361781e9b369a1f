import itertools
import math
from collections import defaultdict

import numpy as np
import pytest

from vrdlab import mitigation as M
from vrdlab.device import RdtModel, normal_cdf_on_grid
from vrdlab.errors import ConfigError, IntegrityError


def cfg(tech, rdt, g=0.0, **params):
    return M.MitigationConfig(tech, rdt, g, params)


def unmitigated_counts(trace, outcome):
    """Exact per-row counts since the row's last mitigation, recomputed from the log.

    A mitigation at event i is attributed to the row activated at event i.
    """
    mitigated_at = {i for i, _, _ in outcome.refresh_log}
    since = defaultdict(int)
    worst = 0
    for i, key in enumerate(trace.events):
        since[key] += 1
        worst = max(worst, since[key])
        if i in mitigated_at:
            since[key] = 0
    return worst


# --- thresholds --------------------------------------------------------------

def test_guardband_rules():
    assert cfg("prac", 500, 0.1).effective_threshold == 450
    assert cfg("prac", 500, 0.5).effective_threshold == 250
    assert M.MitigationConfig("prac", 500, 0.5, margin_rule="divide").effective_threshold == 333
    assert cfg("prac", 1024, 0.5).aggressor_threshold == 256
    assert cfg("para", 1024, 0.5).aggressor_threshold == 512
    assert cfg("prac", 1024, threshold=7).aggressor_threshold == 7
    with pytest.raises(ConfigError):
        cfg("prac", 10, 1.0)
    with pytest.raises(ConfigError):
        cfg("prac", 0)


# --- PRAC ---------------------------------------------------------------------

def test_prac_below_threshold():
    out = M.run_prac(M.single_sided_trace(5, 9, 16), cfg("prac", 1, threshold=10))
    assert out.backoffs_or_rfm == 0 and out.preventive_refreshes == 0


def test_prac_three_backoffs():
    out = M.run_prac(M.single_sided_trace(5, 30, 16), cfg("prac", 1, threshold=10))
    assert out.backoffs_or_rfm == 3
    assert out.max_unmitigated == 10


@pytest.mark.parametrize("seed", range(20))
def test_prac_never_exceeds_threshold(seed):
    tr = M.random_trace(3000, 64, banks=2, seed=seed, hot_rows=3, hot_fraction=0.6)
    out = M.run_prac(tr, cfg("prac", 1, threshold=17))
    assert out.max_unmitigated <= 17
    assert unmitigated_counts(tr, out) == out.max_unmitigated


# --- Graphene -----------------------------------------------------------------

def test_graphene_examples():
    t = 12
    below = M.run_graphene(M.single_sided_trace(5, t - 1, 16), cfg("graphene", 1, threshold=t))
    assert below.mitigations == 0 and below.preventive_refreshes == 0
    at = M.run_graphene(M.single_sided_trace(5, t, 16), cfg("graphene", 1, threshold=t))
    assert at.mitigations == 1 and at.preventive_refreshes == 2  # one action, both neighbors
    edge = M.run_graphene(M.single_sided_trace(0, t, 16), cfg("graphene", 1, threshold=t))
    assert edge.preventive_refreshes == 1


def adversarial_trace(n, k, seed):
    # many decoys to churn the table, plus a few rows hammered in bursts
    rng = np.random.default_rng(seed)
    ev = []
    hot = rng.integers(0, 512, 3)
    while len(ev) < n:
        if rng.random() < 0.5:
            ev += [(0, int(r)) for r in rng.integers(0, 512, k + 1)]
        else:
            ev += [(0, int(hot[rng.integers(0, 3)]))] * int(rng.integers(1, 40))
    return M.ActivationTrace(ev[:n], 512)


@pytest.mark.parametrize("seed", range(10))
def test_graphene_table_bound(seed):
    n, k, t = 5000, 8, 40
    tr = adversarial_trace(n, k, seed)
    out = M.run_graphene(tr, cfg("graphene", 1, threshold=t, table_size=k))
    worst = unmitigated_counts(tr, out)
    assert worst == out.max_unmitigated
    assert worst <= t + n / (k + 1)


@pytest.mark.parametrize("seed", range(5))
def test_graphene_provisioned_never_exceeds(seed):
    n, t = 4000, 25
    tr = M.random_trace(n, 256, seed=seed, hot_rows=5, hot_fraction=0.4)
    out = M.run_graphene(tr, cfg("graphene", 1, threshold=t, table_size=math.ceil(n / t)))
    assert out.max_unmitigated <= t


def test_graphene_table_never_undercounts():
    rng = np.random.default_rng(1)
    tab = M.GrapheneTable(4)
    true = defaultdict(int)
    for r in rng.integers(0, 20, 3000).tolist():
        tab.observe(r)
        true[r] += 1
        assert all(tab.estimate(x) >= c for x, c in true.items())


# --- PARA / MINT --------------------------------------------------------------

def test_para_p_one():
    tr = M.random_trace(500, 32, seed=0)
    out = M.run_para(tr, cfg("para", 64, p=1.0), seed=1, victims=M.VictimPopulation(RdtModel.constant(2)))
    inner = sum(len(tr.neighbors(r)) for _, r in tr.events)
    assert out.preventive_refreshes == inner
    assert out.missed_bitflips == 0


def test_para_p_one_interior_rows():
    tr = M.ActivationTrace([(0, r) for r in (3, 4, 5, 4, 3)], 16)
    out = M.run_para(tr, cfg("para", 64, p=1.0))
    assert out.preventive_refreshes == 2 * len(tr)


def test_para_p_zero_matches_unmitigated():
    tr = M.random_trace(3000, 16, seed=2, hot_rows=2, hot_fraction=0.5)
    model = RdtModel.normal(60, 10)
    para = M.run_para(tr, cfg("para", 64, p=0.0), victims=M.VictimPopulation(model, seed=4))
    base = M.run_none(tr, victims=M.VictimPopulation(model, seed=4))
    assert para.preventive_refreshes == 0
    assert para.missed_bitflips == base.missed_bitflips > 0


def test_para_no_refresh_probability():
    h, p, runs = 20, 0.05, 4000
    tr = M.single_sided_trace(5, h, 16)
    none = sum(M.run_para(tr, cfg("para", 64, p=p), seed=s).mitigations == 0 for s in range(runs))
    q = (1 - p) ** h
    assert abs(none / runs - q) < 3 * math.sqrt(q * (1 - q) / runs)


def test_para_default_probability():
    c = cfg("para", 1000)
    p = M.para_probability(c)
    assert (1 - p) ** 1000 == pytest.approx(1e-15, rel=1e-6)


def test_mint_window_one_is_para_one():
    tr = M.random_trace(400, 32, seed=5)
    a = M.run_mint(tr, cfg("mint", 64, window=1))
    b = M.run_para(tr, cfg("para", 64, p=1.0))
    assert a.preventive_refreshes == b.preventive_refreshes


def test_mint_full_windows():
    w, k = 16, 7
    out = M.run_mint(M.single_sided_trace(5, w * k, 16), cfg("mint", 64, window=w), seed=3)
    assert out.mitigations_per_row == {(0, 5): k}


def test_mint_two_rows_half_rate():
    windows = 5000
    ev = [(0, 3), (0, 9)] * windows
    out = M.run_mint(M.ActivationTrace(ev, 16), cfg("mint", 64, window=2), seed=9)
    hits = out.mitigations_per_row.get((0, 3), 0)
    assert abs(hits / windows - 0.5) < 3 * math.sqrt(0.25 / windows)
    assert out.mitigations == windows


# --- security replay ------------------------------------------------------------

def test_no_mitigation_single_bitflip():
    r = 40
    tr = M.double_sided_trace(1, r, 3)
    out = M.run_none(tr, victims=M.VictimPopulation(RdtModel.constant(r)))
    assert out.missed_bitflips == 1


def test_no_mitigation_below_rdt():
    tr = M.single_sided_trace(0, 39, 2)
    out = M.run_none(tr, victims=M.VictimPopulation(RdtModel.constant(40)))
    assert out.missed_bitflips == 0


def test_prac_half_threshold_exhaustive():
    r = 6
    c = cfg("prac", r)
    assert c.aggressor_threshold == r // 2
    victims = RdtModel.constant(r)
    for ev in itertools.product(range(4), repeat=7):
        tr = M.ActivationTrace([(0, x) for x in ev], 4)
        out = M.run_prac(tr, c, victims=M.VictimPopulation(victims))
        assert out.missed_bitflips == 0, ev


@pytest.mark.parametrize("tech", ["prac", "graphene"])
def test_half_threshold_random_traces(tech):
    victims = RdtModel.normal(200, 20, grid_min=120, grid_max=400)
    for seed in range(10):
        tr = M.random_trace(4000, 24, banks=2, seed=seed, hot_rows=2, hot_fraction=0.7)
        out = M.run(tr, cfg(tech, 120, table_size=64), victims=M.VictimPopulation(victims, seed=seed))
        assert out.missed_bitflips == 0


def test_vrd_missed_frequency_matches_tail():
    t, epochs = 50, 4000
    model = RdtModel.normal(60, 8)
    tr = M.single_sided_trace(0, t * epochs, 2)
    out = M.run_prac(tr, cfg("prac", 1, threshold=t), victims=M.VictimPopulation(model, seed=3))
    assert out.epochs == epochs
    p = normal_cdf_on_grid(model, t)
    sd = math.sqrt(epochs * p * (1 - p))
    assert abs(out.missed_bitflips - epochs * p) < 3 * sd


def test_guardband_monotone_actions():
    tr = M.random_trace(5000, 64, seed=1, hot_rows=4, hot_fraction=0.8)
    for tech in ("prac", "graphene"):
        outs = M.guardband_sweep(tr, tech, 400, (0.0, 0.1, 0.25, 0.5))
        acts = [o.preventive_refreshes for o in outs]
        assert acts == sorted(acts)


def test_para_missed_nonincreasing_in_p():
    tr = M.random_trace(6000, 8, seed=0, hot_rows=2, hot_fraction=0.8)
    model = RdtModel.normal(120, 20)
    freq = []
    for p in (0.0, 0.01, 0.05, 0.2):
        outs = [M.run_para(tr, cfg("para", 64, p=p), seed=s, victims=M.VictimPopulation(model, seed=s))
                for s in range(5)]
        # per-epoch frequency: refreshes open new epochs, so raw counts are not comparable
        freq.append(sum(o.missed_bitflips for o in outs) / sum(o.epochs for o in outs))
    assert freq == sorted(freq, reverse=True)


def test_trace_csv_roundtrip(tmp_path):
    tr = M.random_trace(50, 32, banks=3, seed=1)
    tr.write_csv(tmp_path / "t.csv")
    back = M.ActivationTrace.read_csv(tmp_path / "t.csv", 32, 3)
    assert back.events == tr.events
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(IntegrityError):
        M.ActivationTrace.read_csv(tmp_path / "bad.csv")
    with pytest.raises(ConfigError):
        M.ActivationTrace([(0, 40)], 32)
