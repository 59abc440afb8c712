import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hedgegame import (
    Game,
    NotStrictEquilibriumError,
    check_global_strictness,
    expected_payoff,
    find_strict_equilibria,
    load_game,
    make_game,
    payoff_vector,
    pure_payoff_vector,
    save_game,
)
from hedgegame.game import (
    check_local_strictness,
    deviation_witness,
    local_margin,
    pure_profile_distribution,
)

from .oracles import brute_expected_payoff, brute_payoff_vector, brute_strict_equilibria

UNIFORM = [np.array([0.5, 0.5])] * 2
C, D = 0, 1


def test_pd_tensor(pd):
    assert pd.num_players == 2
    assert pd.action_counts == (2, 2)
    # u(C,C)=(3,3), u(C,D)=(0,5), u(D,C)=(5,0), u(D,D)=(1,1)
    for s, u in {(C, C): (3, 3), (C, D): (0, 5), (D, C): (5, 0), (D, D): (1, 1)}.items():
        assert (pd.payoffs[0][s], pd.payoffs[1][s]) == u


def test_expected_payoff_examples(pd):
    dd = pure_profile_distribution(pd, (D, D))
    assert expected_payoff(pd, dd, 0) == 1.0
    assert expected_payoff(pd, UNIFORM, 0) == pytest.approx(2.25, abs=1e-12)


def test_expected_payoff_degenerate_selects_entry():
    g = make_game("random_generic", 3, [2, 3, 2], seed=4)
    for s in [(0, 0, 0), (1, 2, 1), (0, 1, 1)]:
        x = pure_profile_distribution(g, s)
        for i in range(3):
            assert expected_payoff(g, x, i) == pytest.approx(g.payoffs[i][s], abs=1e-15)


def test_payoff_vector_examples(pd):
    np.testing.assert_allclose(payoff_vector(pd, UNIFORM, 0), [1.5, 3.0])
    x = [np.array([0.3, 0.7]), np.array([0.0, 1.0])]
    np.testing.assert_allclose(payoff_vector(pd, x, 0), [0.0, 1.0])


def test_pure_payoff_vector_examples(pd):
    np.testing.assert_array_equal(pure_payoff_vector(pd, (D, D), 0), [0.0, 1.0])
    np.testing.assert_array_equal(pure_payoff_vector(pd, (C, C), 1), [3.0, 5.0])


def test_pure_matches_mixed_at_degenerate_profile():
    g = make_game("random_generic", 3, [3, 2, 2], seed=9)
    s = (2, 0, 1)
    x = pure_profile_distribution(g, s)
    for i in range(3):
        np.testing.assert_allclose(pure_payoff_vector(g, s, i), payoff_vector(g, x, i))


def test_dimension_errors(pd):
    with pytest.raises(ValueError):
        expected_payoff(pd, [np.array([1.0, 0.0])], 0)
    with pytest.raises(ValueError):
        payoff_vector(pd, [np.array([1.0, 0.0, 0.0]), np.array([1.0, 0.0])], 0)
    with pytest.raises(ValueError):
        expected_payoff(pd, UNIFORM, 2)
    with pytest.raises(ValueError):
        pure_payoff_vector(pd, (0, 2), 0)


@st.composite
def game_and_profile(draw):
    n = draw(st.integers(1, 3))
    counts = draw(st.lists(st.integers(1, 3), min_size=n, max_size=n))
    seed = draw(st.integers(0, 2**31))
    g = make_game("random_generic", n, counts, seed=seed)
    rng = np.random.default_rng(seed + 1)
    x = [rng.dirichlet(np.ones(c)) for c in counts]
    return g, x


@settings(max_examples=60, deadline=None)
@given(game_and_profile())
def test_pairing_identity_and_brute_force(gx):
    g, x = gx
    for i in range(g.num_players):
        v = payoff_vector(g, x, i)
        u = expected_payoff(g, x, i)
        assert abs(u - v @ x[i]) <= 1e-9
        assert u == pytest.approx(brute_expected_payoff(g.payoffs, x, i), abs=1e-12)
        np.testing.assert_allclose(v, brute_payoff_vector(g.payoffs, x, i), atol=1e-12)


def test_find_strict_equilibria_examples(pd, pennies, coordination):
    r = find_strict_equilibria(pd)
    assert r.strict_equilibria == [(D, D)] and r.margins == [1.0]
    assert find_strict_equilibria(pennies).strict_equilibria == []
    r = find_strict_equilibria(coordination)
    assert r.strict_equilibria == [(0, 0), (1, 1)]
    assert r.margins == [2.0, 1.0]
    assert all(m > 0 for m in r.margins)


@pytest.mark.parametrize("counts", [[2, 2], [2, 3], [3, 3, 2]])
def test_strictness_oracle_equivalence(counts):
    for seed in range(200):
        g = make_game("random_generic", len(counts), counts, seed=seed)
        assert find_strict_equilibria(g).strict_equilibria == brute_strict_equilibria(g.payoffs)


def test_global_strictness_pd(pd):
    res = check_global_strictness(pd, (D, D), samples=10000, rng_seed=0)
    assert res.holds and res.label == "holds_on_samples"
    assert res.points_tested >= 10000


def test_global_strictness_coordination_violated_near_bb(coordination):
    res = check_global_strictness(coordination, (0, 0), samples=10000, rng_seed=0)
    assert not res.holds
    # worst violation is at the other pure equilibrium
    np.testing.assert_allclose(res.witness[0], [0.0, 1.0], atol=0.05)
    np.testing.assert_allclose(res.witness[1], [0.0, 1.0], atol=0.05)


def test_global_strictness_needs_strict(pd, pennies):
    with pytest.raises(NotStrictEquilibriumError):
        check_global_strictness(pd, (C, C))
    with pytest.raises(NotStrictEquilibriumError):
        check_global_strictness(pennies, (0, 0))


def test_variational_equality_at_equilibrium(pd):
    from hedgegame.game import variational_gap

    xs = [v[None] for v in pure_profile_distribution(pd, (D, D))]
    assert variational_gap(pd, xs, (D, D), 1.0)[0] == 0.0


def test_local_strictness_on_coordination(coordination):
    # the strict margin itself fails arbitrarily close to (A, A); the certified
    # local margin must not
    assert local_margin(coordination, (0, 0), 0.2) == pytest.approx(1.7)
    res = check_local_strictness(coordination, (0, 0), radius=0.2, samples=5000)
    assert res.holds and res.radius == 0.2 and res.margin > 0


def test_converse_witness(pd, pennies):
    assert deviation_witness(pd, (D, D)) is None
    for s in [(C, C), (C, D), (D, C)]:
        _, vals = deviation_witness(pd, s)
        assert np.all(vals >= 0)
    for s in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        _, vals = deviation_witness(pennies, s)
        assert np.all(vals >= 0)


def test_make_game_named_and_random(pd):
    assert find_strict_equilibria(make_game("matching_pennies")).strict_equilibria == []
    a = make_game("random_generic", 3, [2, 3, 2], seed=11)
    b = make_game("random_generic", 3, [2, 3, 2], seed=11)
    assert a.payoffs.tobytes() == b.payoffs.tobytes()
    assert a.payoffs.min() >= 0 and a.payoffs.max() <= 1
    with pytest.raises(ValueError):
        make_game("random_generic", 2, [2, 0])
    with pytest.raises(ValueError):
        make_game("random_generic", 0, [])
    with pytest.raises(ValueError):
        make_game("chicken")


def test_game_is_immutable(pd):
    with pytest.raises(ValueError):
        pd.payoffs[0, 0, 0] = 7.0


def test_game_validation():
    with pytest.raises(ValueError):
        Game(np.zeros((3, 2, 2)))
    with pytest.raises(ValueError):
        Game(np.array([[[np.nan, 0], [0, 0]], [[0, 0], [0, 0]]]))


def test_game_file_roundtrip(tmp_path):
    g = make_game("random_generic", 3, [2, 3, 2], seed=5)
    path = tmp_path / "g.json"
    save_game(g, path)
    h = load_game(path)
    assert h == g
    assert h.payoffs.tobytes() == g.payoffs.tobytes()
    import json

    doc = json.loads(path.read_text())
    assert doc["players"] == 3 and doc["actions"] == [2, 3, 2]
    assert len(doc["payoffs"]) == 3 and len(doc["payoffs"][0]) == 12
    # row-major joint-profile order
    assert doc["payoffs"][1][1 * 6 + 2 * 2 + 1] == g.payoffs[1][1, 2, 1]


def test_game_file_rejects_bad_documents(tmp_path):
    path = tmp_path / "g.json"
    path.write_text('{"players": 2, "actions": [2, 2], "payoffs": [[1, 2, 3], [1, 2, 3, 4]]}')
    with pytest.raises(ValueError):
        load_game(path)
    path.write_text('{"players": 2, "actions": [2, 2], "payoffs": [], "extra": 1}')
    with pytest.raises(ValueError, match="extra"):
        load_game(path)
