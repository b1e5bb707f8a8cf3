import json
import math

import numpy as np
import pytest

from adaptive_qsv import quantum as q
from adaptive_qsv import strategies as S


def sin2(theta):
    return math.sin(math.radians(theta)) ** 2


def spectral_form_by_hand(theta):
    """The one-way operator assembled directly from its eigen-decomposition."""
    t = math.radians(theta)
    s2, c2 = math.sin(t) ** 2, math.cos(t) ** 2
    psi = np.array([0, math.cos(t), -math.sin(t), 0])
    perp = np.array([0, math.sin(t), math.cos(t), 0])
    hh = np.array([1, 0, 0, 0])
    vv = np.array([0, 0, 0, 1])
    return (
        np.outer(psi, psi)
        + s2 / (1 + s2) * np.outer(perp, perp)
        + c2 / (1 + s2) * np.outer(vv, vv)
        + s2 / (1 + s2) * np.outer(hh, hh)
    )


class TestUniLocc:
    def test_probabilities_60(self):
        s = S.build_uni_locc(60)
        np.testing.assert_allclose(s.probabilities, [2 / 7, 2 / 7, 3 / 7], atol=1e-12)
        assert sum(s.probabilities) == pytest.approx(1, abs=1e-12)

    def test_lambda2_60(self):
        assert S.build_uni_locc(60).lambda2 == pytest.approx(1 - 1 / 1.75, abs=1e-10)

    def test_operator_matches_spectral_form_60(self):
        np.testing.assert_allclose(S.build_uni_locc(60).omega, spectral_form_by_hand(60), atol=1e-10)

    def test_operator_identity_random_angles(self):
        rng = np.random.default_rng(2020)
        for theta in rng.uniform(45, 90, size=200)[1:]:
            s = S.build_uni_locc(theta)
            assert np.linalg.norm(s.omega - spectral_form_by_hand(theta)) < 1e-9
            assert s.lambda2 == pytest.approx(sin2(theta) / (1 + sin2(theta)), abs=1e-10)

    def test_setting_labels_and_feed_forward(self):
        x, y, z = S.build_uni_locc(60).settings
        assert (x.label, y.label, z.label) == ("X", "Y", "Z")
        # outcome 1 is the +1 Pauli eigenvector; follower kets per the X/Y/Z rule
        assert x.leader_names[1] == "+" and x.follower_names == ("u-", "u+")
        assert y.leader_names[1] == "R" and y.follower_names == ("w+", "w-")
        assert z.leader_names[1] == "H" and z.follower_names == ("H", "V")
        np.testing.assert_allclose(z.follower_projector(1), q.projector(q.V))
        np.testing.assert_allclose(z.follower_projector(0), q.projector(q.H))

    def test_each_setting_accepts_target(self):
        for theta in (46, 60, 70, 80, 89):
            for d in ("AB", "BA"):
                rho = q.projector(q.target_state(theta))
                for s in S.build_uni_locc(theta, d).settings:
                    assert q.expectation(s.operator(), rho) == pytest.approx(1, abs=1e-10)

    def test_settings_are_projectors(self):
        for d in ("AB", "BA"):
            for s in S.build_uni_locc(63, d).settings:
                m = s.operator()
                np.testing.assert_allclose(m @ m, m, atol=1e-10)
                np.testing.assert_allclose(
                    s.leader_projector(0) + s.leader_projector(1), np.eye(2), atol=1e-12
                )

    def test_y_mapping_other_pairing_fails(self):
        # pairing R with omega+ (the alternative reading) does not accept the target
        theta = 60
        bad = q.tensor(q.projector(q.R), q.projector(q.omega(theta, +1))) + q.tensor(
            q.projector(q.L), q.projector(q.omega(theta, -1))
        )
        assert q.expectation(bad, q.projector(q.target_state(theta))) < 0.9

    def test_reverse_direction(self):
        s = S.build_uni_locc(70, "BA")
        assert s.name == "uni_ba"
        assert all(st.leader == "B" for st in s.settings)
        np.testing.assert_allclose(s.omega, sum(st.probability * st.operator() for st in s.settings), atol=1e-12)
        w = s.spectrum()
        assert w[0] == pytest.approx(1, abs=1e-10)
        assert s.lambda2 == pytest.approx(w[1], abs=1e-10)

    @pytest.mark.parametrize("theta", [30, 45, 90, 95])
    def test_range(self, theta):
        with pytest.raises(S.StrategyRangeError, match=r"\(45, 90\)"):
            S.build_uni_locc(theta)

    def test_bad_direction(self):
        with pytest.raises(q.DomainError):
            S.build_uni_locc(60, "AA")


class TestBiLocc:
    @pytest.mark.parametrize("theta", [46, 60, 70, 80])
    def test_lambda2(self, theta):
        s = S.build_bi_locc(theta)
        assert s.lambda2 == pytest.approx(1 / 3, abs=1e-15)
        np.testing.assert_allclose(s.spectrum(), [1, 1 / 3, 1 / 3, 1 / 3], atol=1e-12)
        assert s.settings == ()
        assert dict(s.direction_policy) == {"AB": 0.5, "BA": 0.5}

    def test_maximally_mixed(self):
        assert q.expectation(S.build_bi_locc(60).omega, np.eye(4) / 4) == pytest.approx(0.5, abs=1e-12)

    def test_range(self):
        with pytest.raises(S.StrategyRangeError):
            S.build_bi_locc(40)


class TestLoAndGlobal:
    def test_lo_45(self):
        s = S.build_lo_optimal(45)
        assert s.lambda2 == pytest.approx(0.6, abs=1e-12)
        assert S.constant_factor(s) == pytest.approx(2.5, abs=1e-12)

    def test_lo_60(self):
        s = S.build_lo_optimal(60)
        assert s.lambda2 == pytest.approx(0.5889869382012379, abs=1e-12)
        sc = math.sin(math.radians(60)) * math.cos(math.radians(60))
        assert S.constant_factor(s) == pytest.approx(2 + sc, abs=1e-12)
        assert S.constant_factor(s) == pytest.approx((4 + math.sin(math.radians(120))) / 2, abs=1e-12)

    def test_lo_surrogate_spectrum(self):
        for theta in (10, 45, 60, 85):
            s = S.build_lo_optimal(theta)
            w = s.spectrum()
            assert w[0] == pytest.approx(1, abs=1e-10)
            assert w[1] == pytest.approx(s.lambda2, abs=1e-10)

    def test_lo_custom_operator(self):
        omega = S.uni_closed_form(60)
        s = S.build_lo_optimal(60, omega=omega)
        assert s.lambda2 == pytest.approx(3 / 7, abs=1e-10)

    def test_lo_custom_operator_must_accept_target(self):
        with pytest.raises(q.ContractError):
            S.build_lo_optimal(60, omega=np.eye(4) / 2)

    def test_global(self):
        s = S.build_global(33)
        assert s.lambda2 == 0
        assert s.entangled
        assert S.constant_factor(s) == 1
        assert q.expectation(s.omega, q.projector(q.target_state(33))) == pytest.approx(1)
        assert q.expectation(s.omega, np.eye(4) / 4) == pytest.approx(0.25)


class TestConstantFactor:
    def test_values(self):
        assert S.constant_factor(S.build_global(60)) == 1
        assert S.constant_factor(S.build_bi_locc(60)) == pytest.approx(1.5)
        assert S.constant_factor(S.build_uni_locc(70)) == pytest.approx(1.883022221559489, abs=1e-12)

    def test_ordering(self):
        for theta in np.linspace(45.5, 89.5, 45):
            cf = [S.constant_factor(S.build(k, theta)) for k in ("global", "bi", "uni", "lo")]
            assert cf[0] < cf[1] < cf[2] < cf[3]
            assert cf[2] == pytest.approx(1 + sin2(theta), abs=1e-10)

    def test_degenerate(self):
        s = S.build_global(60)
        from dataclasses import replace

        with pytest.raises(S.DegenerateStrategyError):
            S.constant_factor(replace(s, lambda2=1.0))


class TestInvariants:
    @pytest.mark.parametrize("kind", ["lo", "uni", "uni_ba", "bi", "global"])
    @pytest.mark.parametrize("theta", [50, 60, 70, 80])
    def test_target_is_top_eigenvector(self, kind, theta):
        s = S.build(kind, theta)
        w, v = q.eigh(s.omega)
        assert w[0] == pytest.approx(1, abs=1e-10)
        assert abs(abs(np.vdot(v[:, 0], q.target_state(theta))) - 1) < 1e-10 or w[1] > 1 - 1e-10
        assert q.expectation(s.omega, q.projector(q.target_state(theta))) == pytest.approx(1, abs=1e-10)
        assert s.lambda2 == pytest.approx(w[1], abs=1e-10)

    def test_immutable(self):
        s = S.build_uni_locc(60)
        with pytest.raises(Exception):
            s.lambda2 = 0
        with pytest.raises(ValueError):
            s.omega[0, 0] = 1


class TestSampling:
    def test_single_setting(self):
        from dataclasses import replace

        s = S.build_uni_locc(60)
        one = replace(s, settings=(replace(s.settings[0], probability=1.0),))
        rng = np.random.default_rng(0)
        assert all(S.sample_setting(one, rng) == 0 for _ in range(100))

    def test_frequencies(self):
        s = S.build_uni_locc(60)
        rng = np.random.default_rng(42)
        n = 10**6
        u = rng.random(n)
        idx = np.array([S.setting_index(s, x) for x in u[:1000]])
        counts = np.bincount(np.minimum(np.searchsorted(np.cumsum(s.probabilities), u, "right"), 2), minlength=3)
        assert np.array_equal(idx, np.minimum(np.searchsorted(np.cumsum(s.probabilities), u[:1000], "right"), 2))
        p = np.array([2 / 7, 2 / 7, 3 / 7])
        sigma = np.sqrt(p * (1 - p) / n)
        assert np.all(np.abs(counts / n - p) < 3 * sigma)

    def test_deterministic(self):
        s = S.build_uni_locc(75)
        a = [S.sample_setting(s, r) for r in [np.random.default_rng(9)] for _ in range(500)]
        b = [S.sample_setting(s, r) for r in [np.random.default_rng(9)] for _ in range(500)]
        assert a == b

    def test_effective_only_rejected(self):
        with pytest.raises(S.UnsupportedOperationError, match="tr\\(omega sigma\\)"):
            S.sample_setting(S.build_bi_locc(60), np.random.default_rng(0))


class TestExport:
    def test_json_roundtrip(self):
        d = json.loads(S.to_json(S.build_uni_locc(60)))
        assert d["kind"] == "uni" and d["direction"] == "AB"
        assert d["settings"] == ["X", "Y", "Z"]
        assert d["constant_factor"] == pytest.approx(1.75)
        omega = np.array([[complex(re, im) for re, im in row] for row in d["omega"]])
        np.testing.assert_allclose(omega, S.uni_closed_form(60), atol=1e-12)
        assert set(d) == {
            "kind", "direction", "theta", "probabilities", "settings", "omega", "spectrum",
            "lambda2", "constant_factor", "entangled_measurement", "direction_policy",
        }
