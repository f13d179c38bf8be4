import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hankelmult.analysis import (
    MAXIMAL_EPS,
    OperatorReport,
    RegionSpec,
    averaging_apply,
    closed_form,
    gaussian_maximal_apply,
    global_operator_apply,
    graded_grid,
    hardy_apply,
    hl_maximal,
    in_local_region,
    iterated_hardy_apply,
    local_diff_operator_apply,
    lp_ratio_experiment,
    maximal_truncated_apply,
    operator_sweep,
    resolve_operator,
    t_loc_star_apply,
    tail_operator_apply,
    tensor_hardy_apply,
    weak11_experiment,
    weak_constant,
)
from hankelmult.errors import DomainError, InputError
from hankelmult.grid import Axis, GridFunction, WeightedGrid, lp_norm
from hankelmult.inputs import InputFunction, gaussian_bump, near_atom, unit_indicator
from hankelmult.multiplier import PVConfig, identity_symbol, imaginary_power_symbol, resolvent_symbol

LAMBDAS = [-0.4, 0.0, 0.5, 1.0, 2.3]


def _small_grid(lam=1.0, lo=1.0, hi=3.0, panels=2, order=4):
    ax = Axis(lam, upper=hi, lower=lo, panel_order=order, edges=np.linspace(lo, hi, panels + 1))
    return WeightedGrid([ax])


# ---------------------------------------------------------------- regions

def test_local_region_examples():
    assert in_local_region([1, 1], [1.5, 0.6])
    assert not in_local_region([1, 1], [2.5, 1.0])
    assert not in_local_region([1, 1], [2.0, 1.0])
    assert not in_local_region([1, 1], [0.5, 1.0])
    with pytest.raises(DomainError):
        in_local_region([0, 1], [1, 1])


def test_region_partition_on_grid():
    g = WeightedGrid.build([0.5, 1.0], upper=4.0, panel_order=4)
    pts = g.points()
    for x in pts[::37]:
        loc = RegionSpec(x, "local").contains(pts)
        glob = RegionSpec(x, "global").contains(pts)
        assert np.all(loc ^ glob)
    with pytest.raises(InputError):
        RegionSpec((1.0,), "other")


# ---------------------------------------------------------------- Hardy-type operators

def test_hardy_examples():
    g = WeightedGrid.build([0.5], upper=4.0)
    chi = unit_indicator([0.5]).sample(g)
    vals = hardy_apply(0.5, chi, at=[0.5, 2.0])
    assert vals == pytest.approx([0.5, 0.125], abs=1e-12)
    assert np.all(hardy_apply(0.5, g.zeros()).values == 0)


@pytest.mark.parametrize("beta", LAMBDAS)
def test_hardy_exactness(beta):
    g = WeightedGrid.build([beta])
    chi = unit_indicator([beta]).sample(g)
    x = g.axes[0].nodes
    assert np.max(np.abs(hardy_apply(beta, chi).values - closed_form(f"hardy:{beta}", [beta], x))) <= 1e-8


def test_tensor_hardy_examples():
    g = WeightedGrid.build([0.0])
    one = g.sample(lambda x: np.ones_like(x))
    assert tensor_hardy_apply([0.0], one, at=[0.3, 1.0, 7.0]) == pytest.approx([0.5] * 3, abs=1e-12)
    assert np.all(tensor_hardy_apply([0.0], g.zeros()).values == 0)
    g2 = WeightedGrid.build([0.5, 0.5], panel_order=6)
    pts = np.array([[0.5, 0.7], [1.5, 3.0], [4.0, 0.25]])
    vals = tensor_hardy_apply([0.5, 0.5], unit_indicator([0.5, 0.5]).sample(g2), at=pts)
    assert vals == pytest.approx(closed_form("tensor-hardy:0.5", [0.5, 0.5], pts), abs=1e-10)


def _smooth_positive(g, rng, terms=3):
    """Random positive combination of separable exponentials (interpolation keeps it positive)."""
    coef, rate = rng.uniform(0.1, 1, terms), rng.uniform(0.2, 2, (terms, g.n))
    return g.sample(lambda *c: sum(a * np.exp(-sum(r * ci for r, ci in zip(rs, c))) for a, rs in zip(coef, rate)))


def test_tensor_hardy_dominated_by_iterated_hardy():
    betas = [0.3, 1.2]
    g = WeightedGrid.build(betas, panel_order=6)
    rng = np.random.default_rng(4)
    for _ in range(3):
        h = _smooth_positive(g, rng)
        th = tensor_hardy_apply(betas, h).values
        ih = iterated_hardy_apply(betas, h).values
        assert np.all(th <= ih * (1 + 1e-12) + 1e-300)


def test_averaging_examples():
    g = WeightedGrid.build([0.0])
    one = g.sample(lambda x: np.ones_like(x))
    assert averaging_apply([0.0], one, at=[0.2, 1.0, 8.0]) == pytest.approx([1.5] * 3, abs=1e-12)
    assert np.all(averaging_apply([0.0], g.zeros()).values == 0)
    chi = unit_indicator([1.0]).sample(WeightedGrid.build([1.0]))
    x = chi.grid.axes[0].nodes
    assert np.max(np.abs(averaging_apply([1.0], chi).values - closed_form("averaging:1", [1.0], x))) <= 1e-8


def test_averaging_on_near_atoms():
    # ||Z g||_1 = 2 log 2 ||g||_1 for g >= 0; the L2 ratio stays bounded as atoms shrink
    l2 = []
    for side in (0.2, 0.05):
        inp = near_atom([0.5], side)
        g = graded_grid([0.5], inp, panel_order=8)
        f = inp.sample(g)
        z = averaging_apply([0.5], f)
        assert lp_norm(z, 1) / lp_norm(f, 1) == pytest.approx(2 * math.log(2), rel=2e-3)
        l2.append(lp_norm(z, 2) / lp_norm(f, 2))
    assert np.isfinite(l2[0]) and l2[1] <= l2[0]


def test_tail_operator_examples():
    g = WeightedGrid.build([0.0])
    chi = unit_indicator([0.0]).sample(g)
    assert tail_operator_apply(1, chi, at=[0.25])[0] == pytest.approx(math.log(2), abs=1e-12)
    assert tail_operator_apply(1, chi, at=[0.5, 3.0]) == pytest.approx([0.0, 0.0], abs=1e-15)
    g2 = WeightedGrid.build([0.0, 0.0])
    chi2 = unit_indicator([0.0, 0.0]).sample(g2)
    pts = np.array([[0.25, 0.125], [0.1, 0.3]])
    expected = np.log(1 / (2 * pts[:, 0])) * np.log(1 / (2 * pts[:, 1]))
    assert tail_operator_apply(2, chi2, at=pts) == pytest.approx(expected, abs=1e-12)


def test_closed_form_rejects_unknown():
    with pytest.raises(InputError):
        closed_form("nope", [0.0], [1.0])


# ---------------------------------------------------------------- maximal operators

def test_hl_constant_and_monotone_ladder():
    g = WeightedGrid.build([0.0, 0.0], upper=4.0, panel_order=4)
    out = hl_maximal(g.sample(lambda a, b: 3.0 + 0 * a))
    inner = np.all(g.points() >= 2**-9, axis=1).reshape(g.shape)
    assert np.allclose(out.values[inner], 3.0, rtol=1e-12)
    chi = g.sample(lambda a, b: ((a < 1) & (b < 1)) * 1.0)
    short = hl_maximal(chi, radii=2.0 ** np.arange(-10, 2)).values
    longer = hl_maximal(chi, radii=2.0 ** np.arange(-10, 6)).values
    assert np.all(longer >= short)


@pytest.mark.parametrize("dim", [1, 2])
def test_hl_far_field_decay(dim):
    g = WeightedGrid.build([0.0] * dim, upper=16.0, panel_order=6 if dim == 2 else 10)
    chi = g.sample(lambda *c: np.prod([(ci < 1) for ci in c], axis=0) * 1.0)
    out = hl_maximal(chi, radii=np.geomspace(2**-10, 32, 400))
    x = g.axes[0].nodes
    sel = np.nonzero((x > 3) & (x < 12))[0]
    vals = out.values[sel] if dim == 1 else out.values[sel, sel]
    slope = np.polyfit(np.log(x[sel]), np.log(vals), 1)[0]
    assert abs(slope / -dim - 1) <= 0.10


def test_hl_requires_unweighted_grid():
    from hankelmult.errors import GridMismatchError

    with pytest.raises(GridMismatchError):
        hl_maximal(WeightedGrid.build([0.5], upper=2.0).zeros())


def test_gaussian_maximal():
    g = WeightedGrid.build([0.5], upper=6.0)
    assert np.all(gaussian_maximal_apply([0.5], g.zeros()).values == 0)
    x = g.axes[0].nodes
    k = np.argmin(np.abs(x - 2.0))
    atom = np.zeros(g.shape)
    atom[k] = 1.0 / g.weights[k]
    atom = GridFunction(g, atom)
    prev = None
    for low in (1e-1, 1e-2, 1e-3, 1e-4):
        val = gaussian_maximal_apply([0.5], atom, ladder=np.geomspace(low, 1e2, 64)).values[k]
        if prev is not None:
            assert val >= prev * (1 - 1e-12)
        prev = val
    with pytest.raises(InputError):
        gaussian_maximal_apply([0.5], atom, ladder=[])


_POSITIVE = {
    "hardy": lambda g: hardy_apply(0.5, g).values,
    "tensor-hardy": lambda g: tensor_hardy_apply([0.5], g).values,
    "averaging": lambda g: averaging_apply([0.5], g).values,
    "tail": lambda g: tail_operator_apply(1, g).values,
    "gaussian-maximal": lambda g: gaussian_maximal_apply([0.5], g, ladder=np.geomspace(1e-3, 10, 12)).values,
}


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(sorted(_POSITIVE)))
def test_positive_operators_monotone(seed, name):
    g = WeightedGrid.build([0.5], upper=6.0, panel_order=6)
    rng = np.random.default_rng(seed)
    g1 = _smooth_positive(g, rng)
    g2 = g1 + _smooth_positive(g, rng)
    a, b = _POSITIVE[name](g1), _POSITIVE[name](g2)
    assert np.all(a <= b + 1e-12 * np.abs(b).max())


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_hl_monotone(seed):
    g = WeightedGrid.build([0.0], upper=6.0, panel_order=6)
    rng = np.random.default_rng(seed)
    g1 = _smooth_positive(g, rng)
    g2 = g1 + _smooth_positive(g, rng)
    assert np.all(hl_maximal(g1).values <= hl_maximal(g2).values * (1 + 1e-12))


def _bump_family(scale_a, scale_b):
    box = [(2.0, 4.0)]

    def fa(x):
        return scale_a * np.exp(-((x - 3.0) ** 2) / 0.1) * ((x > 2) & (x < 4))

    def fb(x):
        return fa(x) + scale_b * np.exp(-((x - 2.6) ** 2) / 0.05) * ((x > 2) & (x < 4))

    return (InputFunction(fa, box, [[]], "a"), InputFunction(fb, box, [[]], "b"))


@settings(max_examples=4, deadline=None)
@given(st.floats(0.1, 2.0), st.floats(0.1, 2.0))
def test_global_and_local_diff_monotone(a, b):
    f1, f2 = _bump_family(a, b)
    out = _small_grid(lo=0.5, hi=8.0, panels=3)
    sym = resolvent_symbol(1.0)
    g1, g2 = global_operator_apply(sym, [1.0], f1, out), global_operator_apply(sym, [1.0], f2, out)
    l1, l2 = local_diff_operator_apply(sym, [1.0], f1, out), local_diff_operator_apply(sym, [1.0], f2, out)
    assert np.all(g1.values <= g2.values * (1 + 1e-12))
    assert np.all(l1.values <= l2.values * (1 + 1e-12))


# ---------------------------------------------------------------- singular-integral operators

def test_identity_symbol_gives_zero_tables():
    inp = gaussian_bump([1.0])
    out = _small_grid()
    sym = identity_symbol()
    for fn in (global_operator_apply, local_diff_operator_apply):
        assert np.all(fn(sym, [1.0], inp, out).values == 0)
    for fn in (maximal_truncated_apply, t_loc_star_apply):
        assert np.all(fn(sym, [1.0], inp, grid=out).values == 0)


def test_global_vanishes_for_local_support():
    # support [1.9, 2.1] lies in L(x) for every x in [1.2, 3.6]
    inp = near_atom([1.0], 0.2, center=2.0)
    out = _small_grid(lo=1.2, hi=3.6)
    val = global_operator_apply(resolvent_symbol(1.0), [1.0], inp, out)
    assert np.all(val.values == 0)


def test_maximal_dominates_final_truncation():
    inp = near_atom([1.0], 0.1)
    grid = graded_grid([1.0], inp, panel_order=6)
    sw = operator_sweep(imaginary_power_symbol(1.0), [1.0], inp, grid)
    assert np.all(sw.maximal.values.reshape(-1) >= np.abs(sw.truncations[:, -1]) * (1 - 1e-14))
    with pytest.raises(InputError):
        maximal_truncated_apply(imaginary_power_symbol(1.0), [1.0], inp, eps_schedule=(), grid=grid)


@pytest.mark.parametrize("preset", ["imaginary-power:1", "resolvent:1"])
@pytest.mark.parametrize("side", [0.2, 0.0125])
def test_decomposition_inequality(preset, side):
    from hankelmult.multiplier import symbol_from_preset

    inp = near_atom([1.0], side, center=1.5)
    grid = graded_grid([1.0], inp, panel_order=6)
    sw = operator_sweep(symbol_from_preset(preset), [1.0], inp, grid)
    lhs = sw.maximal.values
    rhs = sw.global_part.values + sw.local_diff.values + sw.local_maximal.values
    assert np.all(lhs <= rhs * (1 + 1e-12) + 1e-300)


def _refined_cfg():
    return PVConfig(MAXIMAL_EPS, time_width=0.25, time_nodes=20, radial_nodes=32)


def test_local_diff_vs_refined_oracle():
    inp = gaussian_bump([0.5], center=2.0, width=0.3)
    out = _small_grid(lam=0.5, lo=1.0, hi=3.0, panels=2, order=4)
    sym = resolvent_symbol(1.0)
    coarse = local_diff_operator_apply(sym, [0.5], inp, out).values
    fine = local_diff_operator_apply(sym, [0.5], inp, out, cfg=_refined_cfg()).values
    assert np.max(np.abs(coarse - fine)) <= 1e-4 * np.max(np.abs(fine))


def test_t_loc_star_vs_refined_oracle():
    inp = gaussian_bump([0.5], center=2.0, width=0.3)
    out = _small_grid(lam=0.5, lo=1.0, hi=3.0, panels=4, order=8)  # 32 nodes
    sym = imaginary_power_symbol(0.5)
    coarse = t_loc_star_apply(sym, [0.5], inp, grid=out).values
    fine = t_loc_star_apply(sym, [0.5], inp, grid=out, cfg=_refined_cfg()).values
    assert out.size == 32
    assert np.max(np.abs(coarse - fine)) <= 1e-4 * np.max(np.abs(fine))


# ---------------------------------------------------------------- harness

def test_lp_ratio_identity():
    for p in (1.0, 2.0, 3.0):
        rep = lp_ratio_experiment("spectral:identity", p, ["gaussian-bump", "random-smooth:3"])
        assert np.allclose(rep.values(), 1.0, atol=2e-3)


def test_lp_ratio_unitarity_beta_one():
    rep = lp_ratio_experiment("spectral:imaginary-power:1", 2.0, ["laguerre-gaussian:3"])
    assert np.allclose(rep.values(), 1.0, atol=1e-3)


def test_imaginary_power_weak_but_not_strong():
    sym = imaginary_power_symbol(2.0)
    strong, weak = [], []
    for side in (0.2, 0.05, 0.0125):
        inp = near_atom([1.0], side)
        sw = operator_sweep(sym, [1.0], inp, graded_grid([1.0], inp, panel_order=6))
        strong.append(lp_norm(sw.multiplier, 1))
        weak.append(weak_constant(sw.multiplier, 1.0))
    assert np.all(np.isfinite(weak)) and max(weak) / min(weak) - 1 <= 0.25
    assert strong[0] < strong[1] < strong[2]
    assert strong[2] - strong[1] > 1.0 and strong[1] - strong[0] > 1.0


def test_weak11_report_for_hardy():
    rep = weak11_experiment("hardy:0.5", ["near-atom:0.2", "near-atom:0.05"], order=(0.5,))
    assert rep.p_label == "weak"
    assert all(math.isfinite(v) and v > 0 for v in rep.values())
    assert rep.spread() <= 0.25


def test_report_serialisation(tmp_path):
    rep = OperatorReport("hardy:0.5", 2.0)
    rep.add("near-atom:0.2", 6, 1.5)
    rep.add("near-atom:0.2", 10, 2.5)
    rep.finalize()
    assert rep.growing == {"near-atom:0.2": True}
    rep.to_json(tmp_path / "r.json")
    rep.to_csv(tmp_path / "r.csv")
    payload = json.loads((tmp_path / "r.json").read_text())
    assert payload["p"] == "2" and payload["rows"][1]["value"] == 2.5
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "operator,p_or_weak,input,resolution,value"
    assert lines[1] == "hardy:0.5,2,near-atom:0.2,6,1.5"
    with pytest.raises(InputError):
        rep.add("x", 6, float("nan"))
    with pytest.raises(InputError):
        rep.add("x", 6, -1.0)


def test_resolve_operator_unknown():
    with pytest.raises(InputError):
        resolve_operator("nope", [1.0])
