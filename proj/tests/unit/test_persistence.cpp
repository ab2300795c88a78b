#include "halbach/persistence.hpp"

#include "halbach/harness.hpp"

#include <doctest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <limits>

using namespace halbach;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "halbach_test_persistence" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bool bit_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

std::string flip_byte(std::string s, std::size_t pos) {
  s[pos] = static_cast<char>(s[pos] ^ 0x01);
  return s;
}

}  // namespace

TEST_CASE("SHA-256 reference vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("binary matrix format") {
  SUBCASE("header and payload layout") {
    Eigen::MatrixXd m(2, 3);
    m << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0;
    const std::string b = encode_matrix(m);
    CHECK(b.size() == 28 + 6 * 8 + 32);
    CHECK(b.substr(0, 8) == std::string("HLBMAT\0\0", 8));
    CHECK(static_cast<unsigned char>(b[8]) == 1);
    CHECK(b[9] == 0);
    CHECK(static_cast<unsigned char>(b[12]) == 2);
    CHECK(static_cast<unsigned char>(b[20]) == 3);
    // Row-major little-endian: the second stored value is m(0, 1) = 2.0 = 0x4000000000000000.
    CHECK(static_cast<unsigned char>(b[28 + 8 + 7]) == 0x40);
    for (int k = 0; k < 7; ++k) CHECK(b[28 + 8 + k] == 0);
    // 1.0 = 0x3FF0000000000000.
    CHECK(static_cast<unsigned char>(b[28 + 7]) == 0x3f);
    CHECK(static_cast<unsigned char>(b[28 + 6]) == 0xf0);
    CHECK(sha256_hex(b.substr(0, b.size() - 32)).size() == 64);
  }

  SUBCASE("round trip is bit exact") {
    Eigen::MatrixXd m = Eigen::MatrixXd::Random(7, 5) * 1e5;
    m(0, 0) = -0.0;
    m(1, 1) = std::numeric_limits<double>::denorm_min();
    m(2, 2) = std::numeric_limits<double>::infinity();
    m(3, 3) = std::numeric_limits<double>::quiet_NaN();
    m(4, 4) = std::nextafter(1.0, 2.0);
    const auto back = decode_matrix(encode_matrix(m), "m");
    CHECK(bit_equal(m, back));

    const auto dir = scratch("matrix");
    write_matrix(dir / "m.bin", m);
    CHECK(bit_equal(read_matrix(dir / "m.bin"), m));
    CHECK(bit_equal(decode_matrix(encode_matrix(Eigen::MatrixXd(0, 4)), "empty"), Eigen::MatrixXd(0, 4)));
  }

  SUBCASE("corruption and version errors") {
    const std::string b = encode_matrix(Eigen::MatrixXd::Identity(3, 3));
    CHECK_THROWS_AS(decode_matrix(flip_byte(b, 40), "m"), ChecksumError);
    CHECK_THROWS_AS(decode_matrix(flip_byte(b, b.size() - 1), "m"), ChecksumError);
    std::string v2 = b;
    v2[8] = 2;
    CHECK_THROWS_AS(decode_matrix(v2, "m"), VersionError);
    CHECK_THROWS_AS(decode_matrix(b.substr(0, b.size() - 8), "m"), DomainError);
    CHECK_THROWS_AS(decode_matrix("not a matrix at all, clearly not", "m"), DomainError);
    CHECK_THROWS_AS(read_matrix(scratch("missing") / "absent.bin"), DomainError);
  }
}

TEST_CASE("Gaussian persistence") {
  const auto array = HalbachArray::build({});
  const ParameterLayout layout(array.n_rings(), 3);
  const auto prior = build_synthetic_prior(array, layout, {});
  const auto dir = scratch("gaussian");
  const auto files = save_gaussian(dir / "prior", prior, layout, "prior");
  CHECK(fs::exists(files.json));
  CHECK(files.covariance.filename() == "prior.cov.bin");

  SUBCASE("round trip is exact") {
    ParameterLayout back_layout(1, 2);
    const auto back = load_gaussian(files.json, &back_layout);
    CHECK(back_layout == layout);
    CHECK(bit_equal(back.mean(), prior.mean()));
    CHECK(bit_equal(back.covariance(), prior.covariance()));
    CHECK(bit_equal(back.cholesky(), prior.cholesky()));
  }

  SUBCASE("tampered covariance is detected") {
    const std::string b = read_file(files.covariance);
    write_file(files.covariance, flip_byte(b, 100));
    CHECK_THROWS_AS(load_gaussian(files.json), ChecksumError);
  }

  SUBCASE("a covariance file from another run is detected") {
    const auto other = save_gaussian(dir / "other", GaussianDensity(prior.mean(), 2.0 * prior.covariance()), layout,
                                     "prior");
    fs::copy_file(other.covariance, files.covariance, fs::copy_options::overwrite_existing);
    CHECK_THROWS_AS(load_gaussian(files.json), ChecksumError);
  }

  SUBCASE("unsupported version") {
    auto j = read_json(files.json);
    j["version"] = 99;
    write_json(files.json, j);
    CHECK_THROWS_AS(load_gaussian(files.json), VersionError);
  }

  CHECK_THROWS_AS(save_gaussian(dir / "bad", prior, ParameterLayout(1, 2), "prior"), DomainError);
}

TEST_CASE("operator persistence") {
  const auto array = HalbachArray::build({});
  const ParameterLayout layout(1, 2);
  const auto spec = field_observable(array, {}, 2);
  const auto op = assemble_linear_operator(array, spec, layout);
  const auto dir = scratch("operator");
  const auto files = save_operator(dir / "op", op, spec.to_json());
  const auto back = load_operator(files.json);
  CHECK(bit_equal(back.matrix(), op.matrix()));
  CHECK(back.layout() == op.layout());
  CHECK(back.row_labels() == op.row_labels());
  write_file(files.covariance, flip_byte(read_file(files.covariance), 30));
  CHECK_THROWS_AS(load_operator(files.json), ChecksumError);
}

TEST_CASE("chain persistence") {
  const auto array = HalbachArray::build({});
  const ParameterLayout layout(1, 2);
  const auto prior = build_synthetic_prior(array, layout, {});
  const auto spec = field_observable(array, {}, 2);
  LinearForward forward(assemble_linear_operator(array, spec, layout));
  const auto obs = make_observation(forward, spec, draw_ground_truth(prior, 2), 1e-4, 2);
  PcnOptions opts;
  opts.n_steps = 400;
  opts.seed = 11;
  const auto chain = run_chain(forward, prior, obs.values, obs.noise_var, opts);
  const auto dir = scratch("chain");
  write_chain(dir / "chain.csv", dir / "chain.json", chain, layout);

  SUBCASE("states, flags and likelihoods survive exactly") {
    const auto back = read_chain(dir / "chain.csv", dir / "chain.json");
    CHECK(bit_equal(back.states, chain.states));
    CHECK(bit_equal(back.log_likelihood, chain.log_likelihood));
    CHECK(back.accepted == chain.accepted);
    CHECK(back.seed == chain.seed);
    CHECK(back.step_size == chain.step_size);
    CHECK(back.strict == chain.strict);
    CHECK(back.acceptance_rate() == chain.acceptance_rate());
  }

  SUBCASE("header carries the parameter labels") {
    const std::string csv = read_file(dir / "chain.csv");
    CHECK(csv.rfind("step,accepted,log_likelihood,Mx_1_1,My_1_1,Mx_2_1", 0) == 0);
  }

  SUBCASE("metadata holds no timing") {
    const auto meta = read_json(dir / "chain.json");
    for (const auto& [key, value] : meta.items()) CHECK(key.find("time") == std::string::npos);
  }

  SUBCASE("edited states are detected") {
    std::string csv = read_file(dir / "chain.csv");
    const auto pos = csv.find('\n', csv.find('\n') + 1) + 3;
    csv[pos] = csv[pos] == '1' ? '2' : '1';
    write_file(dir / "chain.csv", csv);
    CHECK_THROWS_AS(read_chain(dir / "chain.csv", dir / "chain.json"), ChecksumError);
  }
}

TEST_CASE("unwritable destinations raise DomainError") {
  const auto dir = scratch("unwritable");
  write_file(dir / "plain", "x");
  CHECK_THROWS_AS(write_file(dir / "plain" / "child.txt", "y"), DomainError);
  CHECK_THROWS_AS(write_matrix(dir / "plain" / "m.bin", Eigen::MatrixXd::Zero(1, 1)), DomainError);
}
