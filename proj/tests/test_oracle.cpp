#include <doctest.h>

#include <cmath>

#include "hebbseed/data.hpp"
#include "hebbseed/error.hpp"
#include "hebbseed/oracle.hpp"

using namespace hebbseed;

TEST_CASE("exact_pca recovers a planted diagonal covariance") {
    GaussianStream stream = synth_gaussian_stream(2, {4.0, 1.0}, 3);
    Tensor x = stream.next_batch(10000);
    oracle::Mat samples(10000, 2);
    std::copy(x.data(), x.data() + x.size(), samples.v.begin());
    oracle::PcaOracle pca = oracle::exact_pca(samples);
    CHECK(pca.eigvals[0] == doctest::Approx(4.0).epsilon(0.05));
    CHECK(pca.eigvals[1] == doctest::Approx(1.0).epsilon(0.05));
    // top eigenvector within 5 degrees of the planted column
    oracle::Mat planted(1, 2);
    planted(0, 0) = stream.basis[0 * 2 + 0];
    planted(0, 1) = stream.basis[1 * 2 + 0];
    oracle::Mat top(2, 1);
    top(0, 0) = pca.eigvecs(0, 0);
    top(1, 0) = pca.eigvecs(1, 0);
    CHECK(oracle::subspace_angle(planted, top) < 5.0);
}

TEST_CASE("exact_pca d=1 equals the sample variance") {
    oracle::Mat samples(5, 1);
    double data[5] = {1, 2, 3, 4, 10};
    double mean = 4.0;
    double var = 0.0;
    for (int i = 0; i < 5; ++i) {
        samples(i, 0) = data[i];
        var += (data[i] - mean) * (data[i] - mean);
    }
    var /= 5.0;
    oracle::PcaOracle pca = oracle::exact_pca(samples);
    CHECK(pca.eigvals[0] == doctest::Approx(var).epsilon(1e-12));
}

TEST_CASE("exact_pca eigenvalues are rotation invariant") {
    Rng rng(17);
    oracle::Mat samples(200, 4);
    for (double& v : samples.v) v = rng.normal();
    oracle::PcaOracle base = oracle::exact_pca(samples);

    GaussianStream q = synth_gaussian_stream(4, {1, 1, 1, 1}, 5); // orthogonal basis source
    oracle::Mat rotated(200, 4);
    for (int i = 0; i < 200; ++i)
        for (int a = 0; a < 4; ++a) {
            double s = 0.0;
            for (int b = 0; b < 4; ++b) s += q.basis[a * 4 + b] * samples(i, b);
            rotated(i, a) = s;
        }
    oracle::PcaOracle rot = oracle::exact_pca(rotated);
    for (int i = 0; i < 4; ++i)
        CHECK(rot.eigvals[i] == doctest::Approx(base.eigvals[i]).epsilon(1e-8));
}

TEST_CASE("subspace_angle endpoints") {
    oracle::Mat w(1, 2);
    w(0, 0) = 2.0;
    w(0, 1) = 0.0;
    oracle::Mat aligned(2, 1);
    aligned(0, 0) = -1.0; // sign flip must not matter
    aligned(1, 0) = 0.0;
    CHECK(oracle::subspace_angle(w, aligned) == doctest::Approx(0.0).epsilon(1e-12));

    oracle::Mat orth(2, 1);
    orth(0, 0) = 0.0;
    orth(1, 0) = 3.0;
    CHECK(oracle::subspace_angle(w, orth) == doctest::Approx(90.0).epsilon(1e-12));

    oracle::Mat zero(2, 1);
    CHECK_THROWS_AS(oracle::subspace_angle(w, zero), ArgumentError);
}

TEST_CASE("jacobi rejects non-finite input") {
    oracle::Mat m(2, 2);
    m(0, 0) = std::nan("");
    std::vector<double> vals;
    oracle::Mat vecs;
    CHECK_THROWS_AS(oracle::jacobi_eigen_symmetric(m, vals, vecs), ArgumentError);
}
