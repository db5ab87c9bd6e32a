#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "levemb/esd.hpp"
#include "unit/helpers.hpp"

using namespace levemb;

namespace {

TensorD diag(std::initializer_list<double> values) {
  const std::size_t n = values.size();
  TensorD a({n, n});
  std::size_t i = 0;
  for (double v : values) {
    a[i * n + i] = v;
    ++i;
  }
  return a;
}

TensorD gram(std::size_t n, std::mt19937_64& rng) {
  const TensorD b = testing::random_tensor({n, n}, rng);
  TensorD a({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) a[i * n + j] += b[k * n + i] * b[k * n + j];
  return a;
}

Spectrum spectrum(std::size_t dim, std::size_t large) {
  Spectrum s;
  s.dim = dim;
  for (std::size_t i = 0; i < dim; ++i) s.eigenvalues.push_back(i < large ? 1.0 : 0.01);
  return s;
}

}  // namespace

TEST_CASE("jacobi recovers simple spectra") {
  const auto id = sym_eigen(diag({1, 1, 1, 1}));
  for (double v : id.values) CHECK(v == doctest::Approx(1.0));
  const auto d = sym_eigen(diag({0, 2, 1}));
  CHECK(d.values == std::vector<double>{2, 1, 0});
  CHECK(sym_eigen(TensorD({1, 1}, 5.0)).values == std::vector<double>{5.0});
}

TEST_CASE("jacobi agrees with a reference solver") {
  std::mt19937_64 rng(1);
  for (std::size_t n : {2u, 7u, 20u, 45u}) {
    const TensorD a = gram(n, rng);
    const auto res = sym_eigen(a, 1e-12, true);
    Eigen::MatrixXd m(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) m(i, j) = a[i * n + j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(m);
    double trace = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(res.values[i] == doctest::Approx(ref.eigenvalues()[static_cast<Eigen::Index>(n - 1 - i)]).epsilon(1e-9).scale(1.0));
      trace += a[i * n + i];
      sum += res.values[i];
    }
    CHECK(sum == doctest::Approx(trace).epsilon(1e-10));
    CHECK(std::is_sorted(res.values.rbegin(), res.values.rend()));
    // Residual |A v - lambda v| per eigenpair.
    for (std::size_t j = 0; j < n; ++j) {
      double resid = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double av = 0.0;
        for (std::size_t k = 0; k < n; ++k) av += a[i * n + k] * res.vectors[k * n + j];
        resid = std::max(resid, std::abs(av - res.values[j] * res.vectors[i * n + j]));
      }
      CHECK(resid < 1e-8 * std::max(1.0, res.values[0]));
    }
  }
}

TEST_CASE("jacobi is invariant under symmetric permutation") {
  std::mt19937_64 rng(2);
  const std::size_t n = 9;
  const TensorD a = gram(n, rng);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  TensorD p({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) p[i * n + j] = a[perm[i] * n + perm[j]];
  const auto x = sym_eigen(a).values, y = sym_eigen(p).values;
  for (std::size_t i = 0; i < n; ++i) CHECK(x[i] == doctest::Approx(y[i]).epsilon(1e-10));
}

TEST_CASE("jacobi rejects non-symmetric and non-square input") {
  TensorD a = diag({1, 2});
  a[1] = 0.5;
  CHECK_THROWS_AS(sym_eigen(a), UsageError);
  CHECK_THROWS_AS(sym_eigen(TensorD({2, 3})), UsageError);
}

TEST_CASE("difference covariance") {
  Rng rng(3);
  std::mt19937_64 gen(3);
  SUBCASE("identical rows give zero") {
    TensorD e({50, 4}, 1.5);
    const TensorD c = diff_covariance(e, 200, rng);
    for (double v : c.data()) CHECK(v == 0.0);
  }
  SUBCASE("iid standard rows give the identity") {
    const TensorD e = testing::random_tensor({4000, 5}, gen);
    const TensorD c = diff_covariance(e, 40000, rng);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) CHECK(c[i * 5 + j] == doctest::Approx(i == j ? 1.0 : 0.0).scale(1.0).epsilon(0.05));
  }
  SUBCASE("rows on a plane give rank two") {
    const TensorD basis = testing::random_tensor({2, 6}, gen);
    const TensorD z = testing::random_tensor({500, 2}, gen);
    TensorD e({500, 6});
    for (std::size_t r = 0; r < 500; ++r)
      for (std::size_t c = 0; c < 6; ++c) e[r * 6 + c] = z[r * 2] * basis[c] + z[r * 2 + 1] * basis[6 + c];
    const auto s = spectrum_of(e, 5000, rng);
    CHECK(s.eigenvalues[1] > 0.05);
    for (std::size_t i = 2; i < 6; ++i) CHECK(std::abs(s.eigenvalues[i]) < 1e-10);
  }
  CHECK_THROWS_AS(diff_covariance(TensorD({1, 3}), 10, rng), DataError);
  CHECK_THROWS_AS(diff_covariance(TensorD({5, 3}), 1, rng), UsageError);
}

TEST_CASE("detect_esd locates the effective dimension") {
  SUBCASE("collapse after the leading full-rank run") {
    const std::vector<Spectrum> s{spectrum(10, 10), spectrum(20, 20), spectrum(30, 25), spectrum(40, 25),
                                  spectrum(50, 26)};
    const auto det = detect_esd(s);
    CHECK(det.lower_bound == 20);
    REQUIRE(det.n0.has_value());
    CHECK(*det.n0 == 25);
    CHECK(det.ranks == std::vector<std::size_t>{10, 20, 25, 25, 26});
    CHECK(det.full_rank == std::vector<bool>{true, true, false, false, false});
  }
  SUBCASE("slack tolerates a few small eigenvalues") {
    const std::vector<Spectrum> s{spectrum(20, 19), spectrum(40, 30)};
    const auto det = detect_esd(s);
    CHECK(det.full_rank[0]);
    CHECK(det.lower_bound == 20);
    CHECK(det.n0 == std::optional<std::size_t>(30));
  }
  SUBCASE("all full rank means n0 lies beyond the grid") {
    const std::vector<Spectrum> s{spectrum(10, 10), spectrum(20, 20)};
    const auto det = detect_esd(s);
    CHECK(det.lower_bound == 20);
    CHECK_FALSE(det.n0.has_value());
    CHECK(det.max_dim == 20);
  }
  SUBCASE("transitional dims before the plateau are skipped") {
    const std::vector<Spectrum> s{spectrum(20, 20), spectrum(40, 37), spectrum(60, 47), spectrum(80, 54),
                                  spectrum(100, 60), spectrum(120, 61), spectrum(140, 62), spectrum(160, 63)};
    const auto det = detect_esd(s);
    CHECK(det.lower_bound == 40);
    CHECK(det.n0 == std::optional<std::size_t>(61));
    CHECK(det.plateau_start == 100);
  }
  SUBCASE("inconsistent tail ranks give no estimate") {
    const std::vector<Spectrum> s{spectrum(10, 10), spectrum(20, 12), spectrum(30, 25)};
    const auto det = detect_esd(s);
    CHECK(det.lower_bound == 10);
    CHECK_FALSE(det.n0.has_value());
  }
  SUBCASE("a full-rank dim after a collapse does not extend the lower bound") {
    const std::vector<Spectrum> s{spectrum(10, 10), spectrum(20, 12), spectrum(30, 30)};
    CHECK(detect_esd(s).lower_bound == 10);
  }
  SUBCASE("order and options are validated") {
    const std::vector<Spectrum> s{spectrum(20, 20), spectrum(10, 10)};
    CHECK_THROWS_AS(detect_esd(s), UsageError);
    CHECK_THROWS_AS(detect_esd(std::span<const Spectrum>{}), UsageError);
    EsdOptions bad;
    bad.slack = 1.0;
    CHECK_THROWS_AS(detect_esd(std::vector<Spectrum>{spectrum(5, 5)}, bad), UsageError);
  }
}

TEST_CASE("appending a dim at the detected rank never changes n0") {
  std::mt19937_64 rng(9);
  std::size_t checked = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<Spectrum> s;
    std::size_t dim = 0;
    const int count = 2 + static_cast<int>(rng() % 6);
    for (int i = 0; i < count; ++i) {
      dim += 5 + rng() % 20;
      s.push_back(spectrum(dim, rng() % 4 == 0 ? dim : 10 + rng() % 30));
    }
    const auto before = detect_esd(s);
    if (!before.n0) continue;
    s.push_back(spectrum(dim + 10 + rng() % 30, *before.n0));
    CAPTURE(trial);
    CHECK(detect_esd(s).n0 == before.n0);
    ++checked;
  }
  CHECK(checked > 200);
}

TEST_CASE("zero-epoch scan is deterministic and independent of job count") {
  std::mt19937_64 rng(4);
  std::vector<PairSample> pairs;
  for (int i = 0; i < 8; ++i) {
    PairSample p;
    p.s = testing::random_dna(150, rng);
    p.t = testing::random_dna(150, rng);
    p.d = levenshtein(p.s, p.t);
    pairs.push_back(p);
  }
  std::vector<Sequence> probes;
  for (int i = 0; i < 80; ++i) probes.push_back(pad(testing::random_dna(150, rng), 160, Alphabet::dna()));
  EsdScanConfig cfg;
  cfg.base.hidden = 16;
  cfg.dims = {4, 8};
  cfg.seeds = {0, 1};
  cfg.train.epochs = 0;
  cfg.mean_distance = 80.0;
  cfg.sample_pairs = 600;
  const EsdReport a = esd_scan(pairs, {}, probes, cfg);
  cfg.jobs = 3;
  const EsdReport b = esd_scan(pairs, {}, probes, cfg);
  REQUIRE(a.seeds.size() == 2);
  for (std::size_t s = 0; s < 2; ++s) {
    REQUIRE(a.seeds[s].spectra.size() == 2);
    CHECK(a.seeds[s].spectra[1].dim == 8);
    CHECK(a.seeds[s].final_logs.empty());
    for (std::size_t d = 0; d < 2; ++d) CHECK(a.seeds[s].spectra[d].eigenvalues == b.seeds[s].spectra[d].eigenvalues);
  }
  CHECK(a.seeds[0].spectra[0].eigenvalues != a.seeds[1].spectra[0].eigenvalues);
  cfg.dims = {8, 4};
  CHECK_THROWS_AS(esd_scan(pairs, {}, probes, cfg), UsageError);
}
