#include "halbach/prior.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace halbach;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << content;
  return path;
}

Eigen::MatrixXd sample_covariance(const std::vector<Eigen::VectorXd>& xs) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(xs.front().size());
  for (const auto& x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(mean.size(), mean.size());
  for (const auto& x : xs) c += (x - mean) * (x - mean).transpose();
  return c / static_cast<double>(xs.size() - 1);
}

std::vector<BlockTypeModel> correlated_types(const HalbachArray& array) {
  auto types = default_block_types(array, 3000.0, 1000.0, 2000.0, 17);
  for (auto& t : types) {
    t.covariance(0, 1) = t.covariance(1, 0) = 0.4 * 3000.0 * 3000.0;
    t.covariance(1, 2) = t.covariance(2, 1) = -0.2 * 3000.0 * 1000.0;
  }
  return types;
}

}  // namespace

TEST_CASE("Helmholtz CSV") {
  const auto array = HalbachArray::build({});
  const auto records = synth_helmholtz(array, default_block_types(array, 3000.0, 1000.0, 2000.0, 1), 2);
  CHECK(records.size() == 192);

  SUBCASE("round trip preserves every value") {
    const auto path = std::filesystem::temp_directory_path() / "halbach_test_helmholtz.csv";
    write_helmholtz_csv(path.string(), records);
    const auto back = load_helmholtz_csv(path.string());
    REQUIRE(back.size() == records.size());
    for (std::size_t k = 0; k < back.size(); ++k) {
      CHECK(back[k].block == records[k].block);
      CHECK(back[k].ring == records[k].ring);
      CHECK(back[k].moment == records[k].moment);
      CHECK(back[k].volume == records[k].volume);
    }
    std::filesystem::remove(path);
  }

  SUBCASE("empty data section gives an empty list") {
    const auto path = temp_file("halbach_test_helmholtz_empty.csv", "block_i,ring_j,mx_Am2,my_Am2,mz_Am2,volume_m3\n");
    CHECK(load_helmholtz_csv(path.string()).empty());
    std::filesystem::remove(path);
  }

  SUBCASE("bad rows are reported with their line number") {
    const std::string header = "block_i,ring_j,mx_Am2,my_Am2,mz_Am2,volume_m3\n";
    const std::vector<std::pair<std::string, std::string>> cases{
        {header + "1,1,1,2,3,0.001\n2,1,1,2,3,0\n", ":3"},
        {header + "1,1,1,2,3,0.001\n1,1,1,2,3,0.001\n", ":3"},
        {header + "1,1,1,2,3,0.001\n17,1,1,2,3,0.001\n", ":3"},
        {header + "1,1,1,x,3,0.001\n", ":2"},
        {header + "1,1,1,2,3\n", ":2"},
        {"block,ring\n", ":1"},
    };
    for (const auto& [content, where] : cases) {
      const auto path = temp_file("halbach_test_helmholtz_bad.csv", content);
      try {
        load_helmholtz_csv(path.string());
        FAIL("expected a parse error");
      } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find(where) != std::string::npos);
      }
      std::filesystem::remove(path);
    }
    CHECK_THROWS_AS(load_helmholtz_csv("/nonexistent/halbach.csv"), ConfigError);
  }
}

TEST_CASE("fit_prior") {
  const auto array = HalbachArray::build({});
  const ParameterLayout layout3(12, 3);

  SUBCASE("identical records give the exact mean and a jittered SPD covariance") {
    std::vector<HelmholtzRecord> recs;
    for (int j = 1; j <= 4; ++j) {
      for (int i = 1; i <= kBlocksPerRing; ++i) recs.push_back({i, j, Vec3(10.0 * i, -3.0, 0.5), 1e-3});
    }
    const auto prior = fit_prior(recs, layout3);
    for (int j = 1; j <= 12; ++j) {
      for (int i = 1; i <= kBlocksPerRing; ++i) {
        CHECK(prior.mean()(layout3.index(i, j, 0)) == 1e4 * i);
        CHECK(prior.mean()(layout3.index(i, j, 1)) == -3e3);
        CHECK(prior.mean()(layout3.index(i, j, 2)) == 500.0);
      }
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(prior.covariance());
    CHECK(llt.info() == Eigen::Success);
    CHECK(prior.covariance().diagonal().minCoeff() > 0.0);
  }

  SUBCASE("three-sample statistics match the direct formulas") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<HelmholtzRecord> recs;
    for (int j = 1; j <= 3; ++j) {
      for (int i = 1; i <= kBlocksPerRing; ++i) recs.push_back({i, j, Vec3(n(rng), n(rng), n(rng)), 0.5 + 0.1 * j});
    }
    const ParameterLayout layout2(12, 2);
    const auto prior2 = fit_prior(recs, layout2);
    // Three samples in three components give a rank-2 covariance that needs jitter.
    const auto prior3 = fit_prior(recs, layout3);
    for (int type : {1, 2}) {
      std::vector<Vec3> m;
      for (const auto& r : recs) {
        if (r.block == type) m.push_back(r.moment / r.volume);
      }
      Eigen::Matrix3d c = Eigen::Matrix3d::Zero();
      Vec3 mean = Vec3::Zero();
      for (int a = 0; a < 3; ++a) {
        mean(a) = (m[0](a) + m[1](a) + m[2](a)) / 3.0;
        CHECK(prior2.mean()(layout2.index(type, 7, a % 2)) == doctest::Approx(mean(a % 2)).epsilon(1e-14));
        CHECK(prior3.mean()(layout3.index(type, 7, a)) == doctest::Approx(mean(a)).epsilon(1e-14));
      }
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          for (int k = 0; k < 3; ++k) c(a, b) += (m[k](a) - mean(a)) * (m[k](b) - mean(b));
          c(a, b) /= 2.0;
        }
      }
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          CHECK(prior2.covariance()(layout2.index(type, 7, a), layout2.index(type, 7, b)) ==
                doctest::Approx(c(a, b)).epsilon(1e-12));
        }
      }
      const double jitter = 1e-10 * c.trace() / 3.0;
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          const double expected = c(a, b) + (a == b ? jitter : 0.0);
          CHECK(prior3.covariance()(layout3.index(type, 7, a), layout3.index(type, 7, b)) ==
                doctest::Approx(expected).epsilon(1e-12).scale(1e-12 * c.norm()));
        }
      }
    }
    // Independence across blocks and rings.
    CHECK(prior3.covariance()(layout3.index(1, 1, 0), layout3.index(2, 1, 0)) == 0.0);
    CHECK(prior3.covariance()(layout3.index(1, 1, 0), layout3.index(1, 1, 1)) != 0.0);
    CHECK(prior3.covariance()(layout3.index(1, 1, 0), layout3.index(1, 2, 0)) == 0.0);
  }

  SUBCASE("two-component layout drops the axial component") {
    const auto recs = synth_helmholtz(array, correlated_types(array), 3);
    const ParameterLayout layout2(1, 2);
    const auto p2 = fit_prior(recs, layout2);
    const auto p3 = fit_prior(recs, ParameterLayout(1, 3));
    CHECK(p2.dimension() == 32);
    CHECK(p2.covariance().rows() == 32);
    for (int i = 1; i <= kBlocksPerRing; ++i) {
      for (int a = 0; a < 2; ++a) {
        CHECK(p2.mean()(layout2.index(i, 1, a)) == p3.mean()(3 * (i - 1) + a));
        for (int b = 0; b < 2; ++b) {
          CHECK(p2.covariance()(layout2.index(i, 1, a), layout2.index(i, 1, b)) ==
                p3.covariance()(3 * (i - 1) + a, 3 * (i - 1) + b));
        }
      }
    }
  }

  SUBCASE("Cholesky factor reproduces the covariance") {
    const auto prior = fit_prior(synth_helmholtz(array, correlated_types(array), 5), layout3);
    CHECK(prior.dimension() == 576);
    const Eigen::MatrixXd& l = prior.cholesky();
    CHECK((l * l.transpose() - prior.covariance()).norm() <= 1e-10 * prior.covariance().norm());
    CHECK(prior.jitter() == 0.0);
  }

  SUBCASE("ring permutation does not change the prior") {
    auto recs = synth_helmholtz(array, correlated_types(array), 6);
    const auto a = fit_prior(recs, layout3);
    std::vector<int> perm{5, 2, 11, 0, 7, 9, 1, 3, 10, 4, 8, 6};
    for (auto& r : recs) r.ring = perm[static_cast<std::size_t>(r.ring - 1)] + 1;
    std::reverse(recs.begin(), recs.end());
    const auto b = fit_prior(recs, layout3);
    CHECK(a.mean() == b.mean());
    CHECK(a.covariance() == b.covariance());
  }

  SUBCASE("pooled covariance couples block types") {
    const auto recs = synth_helmholtz(array, correlated_types(array), 8, 40);
    const ParameterLayout layout(2, 2);
    const auto pooled = fit_prior(recs, layout, {true});
    const auto& c = pooled.covariance();
    CHECK(c(layout.index(1, 1, 0), layout.index(2, 1, 0)) != 0.0);
    CHECK(c(layout.index(1, 1, 0), layout.index(2, 1, 0)) == c(layout.index(1, 2, 0), layout.index(2, 2, 0)));
    CHECK(c(layout.index(1, 1, 0), layout.index(1, 2, 0)) == 0.0);
    CHECK(c(layout.index(1, 1, 0), layout.index(2, 2, 0)) == 0.0);
  }

  SUBCASE("insufficient data") {
    auto recs = synth_helmholtz(array, correlated_types(array), 9);
    std::vector<HelmholtzRecord> two_rings;
    std::copy_if(recs.begin(), recs.end(), std::back_inserter(two_rings), [](const auto& r) { return r.ring <= 2; });
    CHECK_THROWS_AS(fit_prior(two_rings, layout3), DomainError);
    std::vector<HelmholtzRecord> missing;
    std::copy_if(recs.begin(), recs.end(), std::back_inserter(missing), [](const auto& r) { return r.block != 4; });
    CHECK_THROWS_WITH_AS(fit_prior(missing, layout3), doctest::Contains("block type 4"), DomainError);
    recs.push_back(recs.front());
    CHECK_THROWS_AS(fit_prior(recs, layout3), DomainError);
  }

  SUBCASE("estimates converge at the 1/sqrt(n) rate") {
    const auto types = correlated_types(array);
    const ParameterLayout layout(1, 3);
    auto mean_error = [&](int rings) {
      double e = 0.0;
      for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const auto prior = fit_prior(synth_helmholtz(array, types, 100 + seed, rings), layout);
        for (int i = 1; i <= kBlocksPerRing; ++i) {
          e += (prior.mean().segment<3>(3 * (i - 1)) - types[static_cast<std::size_t>(i - 1)].mean).norm();
        }
      }
      return e;
    };
    const double ratio = mean_error(400) / mean_error(100);
    CHECK(ratio > 0.4);
    CHECK(ratio < 0.6);
  }
}

TEST_CASE("synthetic Helmholtz data") {
  const auto array = HalbachArray::build({});
  const auto types = correlated_types(array);

  SUBCASE("fixed seed is reproducible") {
    const auto a = synth_helmholtz(array, types, 42);
    const auto b = synth_helmholtz(array, types, 42);
    const auto c = synth_helmholtz(array, types, 43);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].moment == b[k].moment);
    CHECK(a[0].moment != c[0].moment);
  }

  SUBCASE("zero covariance reproduces the type mean") {
    auto flat = types;
    for (auto& t : flat) t.covariance.setZero();
    for (const auto& r : synth_helmholtz(array, flat, 1)) {
      CHECK((r.magnetization() - flat[static_cast<std::size_t>(r.block - 1)].mean).norm() <=
            1e-12 * flat[0].mean.norm());
    }
  }

  SUBCASE("non-SPD covariance is rejected") {
    auto bad = types;
    bad[3].covariance(0, 0) = -1.0;
    CHECK_THROWS_AS(synth_helmholtz(array, bad, 1), DomainError);
  }

  SUBCASE("sample covariance of 1e4 rings is within 5 percent") {
    const auto recs = synth_helmholtz(array, types, 77, 10000);
    for (int type : {1, 6, 13}) {
      std::vector<Eigen::VectorXd> xs;
      for (const auto& r : recs) {
        if (r.block == type) xs.push_back(r.magnetization());
      }
      const Eigen::MatrixXd truth = types[static_cast<std::size_t>(type - 1)].covariance;
      CHECK((sample_covariance(xs) - truth).norm() <= 0.05 * truth.norm());
    }
  }
}

TEST_CASE("Gaussian density") {
  Eigen::MatrixXd c(3, 3);
  c << 4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 2.0;
  const Eigen::Vector3d mu(1.0, -2.0, 0.5);
  const GaussianDensity g(mu, c);

  SUBCASE("draws reproduce the covariance") {
    Rng rng = make_rng(3);
    std::vector<Eigen::VectorXd> xs;
    for (int k = 0; k < 10000; ++k) xs.push_back(g.sample(rng));
    CHECK((sample_covariance(xs) - c).norm() <= 0.05 * c.norm());
  }

  SUBCASE("log density matches the quadratic form") {
    const Eigen::Vector3d x(0.3, 0.1, -1.0);
    const double q = (x - mu).dot(c.ldlt().solve(x - mu));
    CHECK(g.log_density(x) == doctest::Approx(-0.5 * q).epsilon(1e-12));
  }

  SUBCASE("invalid input") {
    Eigen::MatrixXd asym = c;
    asym(0, 1) += 0.1;
    CHECK_THROWS_AS(GaussianDensity(mu, asym), DomainError);
    CHECK_THROWS_AS(GaussianDensity(Eigen::Vector2d::Zero(), c), DomainError);
    Eigen::MatrixXd neg = -c;
    CHECK_THROWS_AS(GaussianDensity(mu, neg), DomainError);
  }

  SUBCASE("singular covariance is jittered") {
    const Eigen::Vector3d v(1.0, 2.0, 3.0);
    const GaussianDensity s(Eigen::Vector3d::Zero(), v * v.transpose());
    CHECK(s.jitter() > 0.0);
    CHECK(s.jitter() <= 1e-6 * v.squaredNorm());
  }
}

TEST_CASE("Anderson-Darling test") {
  SUBCASE("statistic matches a reference implementation") {
    const std::vector<double> a{0.31, -1.2, 0.77, 2.1, -0.45, 0.05, 1.33, -0.98, 0.64, -2.2, 0.18, 0.9};
    CHECK(anderson_darling(a).a2 == doctest::Approx(0.172591258141647).epsilon(1e-12));
    std::vector<double> b;
    for (int k = 1; k <= 10; ++k) b.push_back(k);
    CHECK(anderson_darling(b).a2 == doctest::Approx(0.141109247859793).epsilon(1e-12));
    const std::vector<double> c{0.135335, 0.180092, 0.239651, 0.318907, 0.424373, 0.564718, 0.751477, 1.0,
                                1.330712, 1.770795, 2.356418, 3.135715, 4.172734, 5.552708, 7.389056};
    const auto r = anderson_darling(c);
    CHECK(r.a2 == doctest::Approx(1.11243633790367).epsilon(1e-12));
    CHECK(r.a2_adjusted == doctest::Approx(1.11243633790367 * (1 + 0.75 / 15 + 2.25 / 225)).epsilon(1e-12));
    CHECK(r.reject_5pct);
  }

  SUBCASE("normal samples are rejected about 5 percent of the time") {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> n(0.0, 1.0);
    int rejected = 0;
    const int trials = 10000;
    std::vector<double> x(12);
    for (int t = 0; t < trials; ++t) {
      for (double& v : x) v = n(rng);
      rejected += anderson_darling(x).reject_5pct ? 1 : 0;
    }
    const double rate = static_cast<double>(rejected) / trials;
    CHECK(rate > 0.04);
    CHECK(rate < 0.06);
  }

  SUBCASE("uniform samples of size 100 are rejected") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int rejected = 0;
    const int trials = 2000;
    std::vector<double> x(100);
    for (int t = 0; t < trials; ++t) {
      for (double& v : x) v = u(rng);
      rejected += anderson_darling(x).reject_5pct ? 1 : 0;
    }
    CHECK(static_cast<double>(rejected) / trials > 0.95);
  }

  SUBCASE("degenerate input") {
    const std::vector<double> constant(10, 2.0);
    CHECK_THROWS_AS(anderson_darling(constant), DomainError);
    const std::vector<double> few{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(anderson_darling(few), DomainError);
  }
}
