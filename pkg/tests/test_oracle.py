import numpy as np
import pytest

from ggsmvif.errors import OracleRefusal
from ggsmvif.infotheory import gaussian_channel_mi
from ggsmvif.mggd import MggdParams, entropy, sample
from ggsmvif.oracle import (
    OracleEstimate,
    chunk_rng,
    mc_entropy,
    mc_fim_trace,
    mc_fourth_moment_ratio,
    mc_mardia_kurtosis,
    mc_mardia_kurtosis_stream,
    mc_mutual_information,
    mc_noisy_entropy,
)


class TestEstimate:
    def test_agreement(self):
        est = OracleEstimate(1.0, 0.1, 100, 0)
        assert est.agrees_with(1.29) and not est.agrees_with(1.31)
        assert est.z_score(1.2) == pytest.approx(2.0)
        assert est.to_dict() == {"value": 1.0, "std_error": 0.1, "n_samples": 100, "seed": 0}


class TestEntropy:
    def test_gaussian_1d(self):
        est = mc_entropy(MggdParams.isotropic(1, 1.0), 10**6, seed=1)
        assert est.agrees_with(0.5 * np.log(2 * np.pi * np.e))
        assert est.std_error > 0 and est.n_samples == 10**6

    def test_anisotropic_example(self):
        params = MggdParams(0.8, np.diag([1.0, 2.0, 3.0, 4.0]))
        assert mc_entropy(params, 10**6, seed=2).agrees_with(entropy(params))

    def test_se_scales_with_root_n(self):
        params = MggdParams.isotropic(2, 0.7)
        se1 = mc_entropy(params, 2 * 10**5, seed=3).std_error
        se2 = mc_entropy(params, 8 * 10**5, seed=4).std_error
        assert se1 / se2 == pytest.approx(2.0, rel=0.3)

    def test_n_floor(self):
        with pytest.raises(ValueError):
            mc_entropy(MggdParams.isotropic(1, 1.0), 9999)


class TestFisher:
    def test_gaussian_trace(self):
        assert mc_fim_trace(MggdParams.isotropic(3, 1.0), 10**6, seed=5).agrees_with(3.0)

    def test_laplace(self):
        assert mc_fim_trace(MggdParams.isotropic(1, 0.5), 10**6, seed=6).agrees_with(0.25)

    def test_refuses_near_boundary(self):
        with pytest.raises(OracleRefusal):
            mc_fim_trace(MggdParams.isotropic(1, 0.29), 10**4)
        with pytest.raises(ValueError):
            mc_fim_trace(MggdParams.isotropic(1, 0.2), 10**4)
        mc_fim_trace(MggdParams.isotropic(1, 0.31), 10**4)


class TestMardia:
    def test_gaussian(self):
        x = np.random.default_rng(7).standard_normal((10**5, 3))
        assert mc_mardia_kurtosis(x).agrees_with(0.0)

    def test_laplace(self):
        x = sample(MggdParams.isotropic(1, 0.5), 10**6, np.random.default_rng(8))
        est = mc_mardia_kurtosis(x)
        assert est.agrees_with(3.0)
        assert est.value == pytest.approx(3.0, abs=0.25)

    def test_bootstrap_and_influence_se_agree(self):
        x = sample(MggdParams.isotropic(2, 0.7), 2 * 10**4, np.random.default_rng(9))
        infl = mc_mardia_kurtosis(x)
        boot = mc_mardia_kurtosis(x, se="bootstrap", n_boot=200, seed=1)
        assert boot.value == infl.value
        assert boot.std_error == pytest.approx(infl.std_error, rel=0.35)

    def test_stream_matches_in_memory(self):
        params = MggdParams.isotropic(2, 0.7)
        stream = mc_mardia_kurtosis_stream(lambda rng, k: sample(params, k, rng), 3000, seed=2, chunk=1000)
        x = np.vstack([sample(params, 1000, chunk_rng(2, i)) for i in range(3)])
        whole = mc_mardia_kurtosis(x)
        assert stream.value == pytest.approx(whole.value, rel=1e-10)
        assert stream.std_error == pytest.approx(whole.std_error, rel=1e-8)

    def test_sample_size_floor(self):
        with pytest.raises(ValueError):
            mc_mardia_kurtosis(np.zeros((90, 3)))
        with pytest.raises(ValueError):
            mc_mardia_kurtosis(np.random.default_rng(0).standard_normal((100, 1)), se="jackknife")

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_lambda_vanishes_for_mggd(self, alpha):
        x = sample(MggdParams.isotropic(3, alpha), 10**6, np.random.default_rng(10))
        assert mc_fourth_moment_ratio(x).agrees_with(0.0)


class TestMutualInformation:
    def test_gaussian_channel(self):
        est = mc_mutual_information(MggdParams.isotropic(2, 1.0), z=1.0, gain=1.0, noise_var=0.1, seed=11)
        assert est.agrees_with(gaussian_channel_mi(np.ones(2), 1.0, 0.1))

    def test_zero_gain(self):
        est = mc_mutual_information(MggdParams.isotropic(2, 0.6), z=1.0, gain=0.0, noise_var=0.1, seed=12)
        assert abs(est.value) <= 3 * est.std_error

    def test_noise_dominated_branch(self):
        # signal narrower than the noise: the MGGD is integrated out instead
        est = mc_mutual_information(MggdParams.isotropic(2, 1.0), z=0.2, gain=1.0, noise_var=0.1, seed=13)
        assert est.agrees_with(gaussian_channel_mi(np.ones(2), 0.04, 0.1))

    def test_floors(self):
        with pytest.raises(ValueError):
            mc_mutual_information(MggdParams.isotropic(2, 1.0), 1.0, 1.0, 0.1, n=10**4)
        with pytest.raises(ValueError):
            mc_mutual_information(MggdParams.isotropic(2, 1.0), 1.0, 1.0, 0.1, n_inner=100)
        with pytest.raises(ValueError):
            mc_noisy_entropy(MggdParams.isotropic(2, 1.0), 1.0, 0.0, n=10**4)


class TestReproducibility:
    def test_same_seed_same_estimate(self):
        params = MggdParams.isotropic(2, 0.7)
        assert mc_entropy(params, 10**4, seed=3) == mc_entropy(params, 10**4, seed=3)
        assert mc_fim_trace(params, 10**4, seed=3) == mc_fim_trace(params, 10**4, seed=3)
        a = mc_noisy_entropy(params, 1.0, 0.1, n=5000, seed=3, n_inner=200)
        assert a == mc_noisy_entropy(params, 1.0, 0.1, n=5000, seed=3, n_inner=200)

    def test_different_seed_different_estimate(self):
        params = MggdParams.isotropic(2, 0.7)
        assert mc_entropy(params, 10**4, seed=3).value != mc_entropy(params, 10**4, seed=4).value
