import numpy as np
import pytest
from scipy.stats import skew

from statdistort.experiment import extract_ideal
from statdistort.glitch import default_rules, detect_inconsistent, fit_outlier_limits, glitch_percentages
from statdistort.synth import SynthSpec, generate, reference_dataset

RULES = default_rules()
NO_GLITCH = dict(p_missing=0.0, p_inconsistent_extra=0.0, p_outlier=0.0)


def test_reference_deterministic(reference):
    assert reference_dataset() == reference
    assert reference.n_series == 200
    assert set(reference.lengths) == {170}
    assert reference.v == 3


def test_reference_percentages(reference):
    # frozen after counting on the fixed seed: within 2 points of (15, 15, 5)
    ideal = extract_ideal(reference, RULES)
    pct = glitch_percentages(reference, RULES, fit_outlier_limits(ideal))
    assert np.all(np.abs(pct - [15, 15, 5]) <= 2), pct


def test_reference_ideal_size(reference):
    assert extract_ideal(reference, RULES).n_series >= 20


def test_attr1_right_skewed(reference):
    x = reference.values[:, 0]
    assert skew(x[~np.isnan(x)]) > 0.5


def test_no_injection_means_no_inconsistency():
    ds = generate(SynthSpec(seed=3, **NO_GLITCH))
    assert not detect_inconsistent(ds.values, RULES).any()
    assert not np.isnan(ds.values).any()
    pct = glitch_percentages(ds, RULES, fit_outlier_limits(ds))
    assert pct[0] == 0 and pct[1] == 0
    # only distribution-tail outliers remain
    assert 0 < pct[2] < 2


def test_missing_rate_concentration():
    spec = SynthSpec(n_i=1, n_j=4, n_k=5, length=170, p_missing=0.15, p_inconsistent_extra=0.0,
                     p_outlier=0.0, clean_fraction=0.0, seed=8)
    ds = generate(spec)
    cells = ds.values.size
    assert cells >= 10_000
    assert abs(100 * np.isnan(ds.values).mean() - 15) <= 1


def test_rates_converge():
    spec = SynthSpec(n_i=4, n_j=5, n_k=5, p_missing=0.1, p_inconsistent_extra=0.0, p_outlier=0.0,
                     clean_fraction=0.0, seed=9)
    ds = generate(spec)
    n = ds.values.size
    sd = np.sqrt(0.1 * 0.9 / n)
    # per-series intensities vary but average to exactly 1
    assert abs(np.isnan(ds.values).mean() - 0.1) <= 3 * sd * 3


def test_same_seed_same_dataset():
    spec = SynthSpec(n_i=2, n_j=2, n_k=2, seed=4)
    assert generate(spec) == generate(spec)
    assert generate(spec) != generate(SynthSpec(n_i=2, n_j=2, n_k=2, seed=5))


def test_variable_lengths():
    ds = generate(SynthSpec(n_i=2, n_j=2, n_k=3, min_length=20, length=60, seed=1))
    assert ds.lengths.min() >= 20 and ds.lengths.max() <= 60


def test_spec_validation_and_dict_round_trip():
    with pytest.raises(ValueError):
        SynthSpec(p_missing=1.0)
    with pytest.raises(ValueError):
        SynthSpec(inconsistent_attrs=(1,))
    with pytest.raises(ValueError, match="unknown"):
        SynthSpec.from_dict({"colour": 1})
    spec = SynthSpec(seed=12, outlier_factors=((2, 3), (1.5, 2), (0.2, 0.4)))
    assert SynthSpec.from_dict(spec.to_dict()) == spec
