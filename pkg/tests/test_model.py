import json

import numpy as np
import pytest

from discspec import gallery
from discspec.errors import ModelError
from discspec.model import (
    DiscreteModel, MeasureCache, Rate, from_b_and_mu, load_model_file, model_from_dict, mu,
    nu_hat, validate_model,
)


def test_constant_rates_valid_and_flat_measures():
    m = gallery.constant_rates(1, 1, 0)
    assert validate_model(m, 100).ok
    cache = MeasureCache(m)
    assert [float(mu(cache, n)) for n in (0, 5, 50)] == [1.0, 1.0, 1.0]
    assert float(nu_hat(cache, 7)) == pytest.approx(1.0)


def test_quadratic_killing_valid_with_zero_at_two():
    m = gallery.quadratic_killing()
    assert validate_model(m, 100).ok
    assert m.rates(2)[2][2] == 0.0


def test_zero_birth_at_origin_reported():
    rep = validate_model(DiscreteModel("1", "n"), 10)
    assert not rep.ok
    assert rep.issues[0].n == 0 and rep.issues[0].field == "b"
    assert "b_n > 0" in rep.messages()[0]


def test_power_birth_measure_is_one():
    cache = MeasureCache(gallery.power_birth(3.0))
    cache.ensure(1000)
    assert np.max(np.abs(cache.log_mu_array(1000))) < 1e-12


@pytest.mark.parametrize("n", [1, 10, 1000])
def test_quartic_measures(n):
    cache = MeasureCache(gallery.quartic_birth())
    assert float(mu(cache, n)) == pytest.approx(n ** -2.0, rel=1e-12)
    assert float(nu_hat(cache, n)) == pytest.approx(n ** -2.0, rel=1e-12)


def test_power_birth_nu_hat():
    cache = MeasureCache(gallery.power_birth(3.0))
    assert float(nu_hat(cache, 20)) == pytest.approx(20.0 ** -3, rel=1e-12)


def test_measure_cache_invariants():
    m = gallery.geometric_killing()
    cache = MeasureCache(m)
    cache.ensure(50)
    a, b, _ = m.rates(51)
    lm = cache.log_mu_array(50)
    assert lm[0] == 0.0
    assert np.allclose(np.diff(lm), np.log(b[:50]) - np.log(a[1:51]), rtol=0, atol=1e-13)
    assert np.allclose(cache.log_nu_hat_array(50), -(lm + np.log(b[:51])), atol=1e-13)


def test_from_b_and_mu_reconstructs_mu():
    m = from_b_and_mu("n^2+1", "1/(n+1)^3")
    cache = MeasureCache(m)
    n = np.arange(200)
    assert np.allclose(np.exp(cache.log_mu_array(199)), 1 / (n + 1.0) ** 3, rtol=1e-12)


def test_from_b_and_mu_rejects_nonpositive():
    with pytest.raises(ModelError):
        from_b_and_mu("0", "1")


def test_table_without_extension_errors_past_end():
    m = DiscreteModel(Rate.from_table([0, 1, 1]), Rate.from_table([1, 1, 1]))
    assert m.max_index == 2
    with pytest.raises(ModelError):
        m.rates(5)


def test_model_file_round_trip(tmp_path):
    spec = {"kind": "discrete", "a": "n^3", "b": "n^3", "c": 0, "overrides": {"b": {"0": 1.0}}}
    p = tmp_path / "m.json"
    p.write_text(json.dumps(spec))
    m = load_model_file(p)
    assert m.rates(3)[1].tolist() == [1.0, 1.0, 8.0, 27.0]
    again = model_from_dict(m.to_json())
    assert np.array_equal(again.rates(30)[1], m.rates(30)[1])


def test_model_file_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ModelError):
        load_model_file(p)
    with pytest.raises(ModelError):
        model_from_dict({"kind": "discrete", "b": "1"})
    with pytest.raises(ModelError):
        model_from_dict({"kind": "other", "a": "1", "b": "1"})
