#include "halbach/persistence.hpp"

#include "halbach/textio.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace halbach {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 8> kMagic{'H', 'L', 'B', 'M', 'A', 'T', '\0', '\0'};
constexpr std::size_t kHeaderSize = 28;
constexpr std::size_t kDigestSize = 32;

std::array<unsigned char, kDigestSize> sha256_raw(std::string_view bytes) {
  std::array<unsigned char, kDigestSize> out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != kDigestSize) {
    throw DomainError("SHA-256 computation failed");
  }
  return out;
}

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t k = 0; k < sizeof(U); ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

template <class U>
U get_le(std::string_view bytes, std::size_t offset) {
  U v = 0;
  for (std::size_t k = 0; k < sizeof(U); ++k) {
    v |= static_cast<U>(static_cast<unsigned char>(bytes[offset + k])) << (8 * k);
  }
  return v;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v(k));
  return a;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& a, const std::string& what) {
  if (!a.is_array()) throw DomainError(what + ": expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!a[k].is_number()) throw DomainError(what + ": entry " + std::to_string(k) + " is not a number");
    v(static_cast<Eigen::Index>(k)) = a[k].get<double>();
  }
  return v;
}

void check_header(const nlohmann::json& j, const std::string& format, const fs::path& path) {
  if (!j.contains("format") || j["format"] != format) {
    throw DomainError(path.string() + ": not a " + format + " file");
  }
  if (!j.contains("version") || j["version"] != kJsonFormatVersion) {
    throw VersionError(path.string() + ": unsupported " + format + " version " +
                       (j.contains("version") ? j["version"].dump() : std::string("(missing)")));
  }
}

Eigen::MatrixXd read_checked_matrix(const fs::path& json_path, const nlohmann::json& j, const std::string& key) {
  const fs::path bin = json_path.parent_path() / j.at(key + "_file").get<std::string>();
  const std::string bytes = read_file(bin);
  if (sha256_hex(bytes) != j.at(key + "_sha256").get<std::string>()) {
    throw ChecksumError(bin.string() + ": checksum does not match " + json_path.string());
  }
  return decode_matrix(bytes, bin.string());
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : sha256_raw(bytes)) {
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 0xf]);
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string encode_matrix(const Eigen::MatrixXd& m) {
  std::string out(kMagic.begin(), kMagic.end());
  put_le<std::uint32_t>(out, kMatrixFormatVersion);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  out.reserve(out.size() + static_cast<std::size_t>(m.size()) * 8 + kDigestSize);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(m(r, c)));
  }
  const auto digest = sha256_raw(out);
  out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  return out;
}

Eigen::MatrixXd decode_matrix(std::string_view bytes, const std::string& what) {
  if (bytes.size() < kHeaderSize + kDigestSize || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw DomainError(what + ": not a matrix file");
  }
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kMatrixFormatVersion) {
    throw VersionError(what + ": unsupported matrix format version " + std::to_string(version));
  }
  const auto rows = get_le<std::uint64_t>(bytes, 12);
  const auto cols = get_le<std::uint64_t>(bytes, 20);
  if (cols != 0 && rows > (bytes.size() - kHeaderSize) / 8 / cols) throw DomainError(what + ": truncated matrix file");
  const std::size_t payload = kHeaderSize + static_cast<std::size_t>(rows * cols) * 8;
  if (bytes.size() != payload + kDigestSize) throw DomainError(what + ": matrix file has the wrong length");
  const auto digest = sha256_raw(bytes.substr(0, payload));
  if (std::memcmp(digest.data(), bytes.data() + payload, kDigestSize) != 0) {
    throw ChecksumError(what + ": matrix checksum mismatch");
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::size_t offset = kHeaderSize;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c, offset += 8) {
      m(r, c) = std::bit_cast<double>(get_le<std::uint64_t>(bytes, offset));
    }
  }
  return m;
}

void write_matrix(const fs::path& path, const Eigen::MatrixXd& m) { write_file(path, encode_matrix(m)); }

Eigen::MatrixXd read_matrix(const fs::path& path) { return decode_matrix(read_file(path), path.string()); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view contents) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw DomainError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DomainError("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw DomainError("write failed for " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DomainError(path.string() + ": " + e.what());
  }
}

nlohmann::json layout_to_json(const ParameterLayout& layout) {
  return {{"n_blocks", layout.n_blocks()}, {"n_rings", layout.n_rings()}, {"n_components", layout.n_components()}};
}

ParameterLayout layout_from_json(const nlohmann::json& j) {
  return ParameterLayout(j.at("n_rings").get<int>(), j.at("n_components").get<int>(), j.at("n_blocks").get<int>());
}

GaussianFiles save_gaussian(const fs::path& stem, const GaussianDensity& density, const ParameterLayout& layout,
                            const std::string& kind) {
  if (layout.dimension() != density.dimension()) throw DomainError("layout does not match the density dimension");
  GaussianFiles files{fs::path(stem.string() + ".json"), fs::path(stem.string() + ".cov.bin")};
  const std::string cov = encode_matrix(density.covariance());
  write_file(files.covariance, cov);
  const nlohmann::json j{{"format", "halbach-gaussian"},
                         {"version", kJsonFormatVersion},
                         {"kind", kind},
                         {"layout", layout_to_json(layout)},
                         {"labels", layout.labels()},
                         {"mean", vector_to_json(density.mean())},
                         {"jitter", density.jitter()},
                         {"covariance_file", files.covariance.filename().string()},
                         {"covariance_sha256", sha256_hex(cov)}};
  write_json(files.json, j);
  return files;
}

GaussianDensity load_gaussian(const fs::path& json_path, ParameterLayout* layout) {
  const auto j = read_json(json_path);
  check_header(j, "halbach-gaussian", json_path);
  try {
    const ParameterLayout l = layout_from_json(j.at("layout"));
    Eigen::VectorXd mean = vector_from_json(j.at("mean"), json_path.string() + ": mean");
    Eigen::MatrixXd cov = read_checked_matrix(json_path, j, "covariance");
    if (mean.size() != l.dimension() || cov.rows() != mean.size() || cov.cols() != mean.size()) {
      throw DomainError(json_path.string() + ": mean, covariance and layout dimensions disagree");
    }
    if (layout) *layout = l;
    return GaussianDensity(std::move(mean), std::move(cov));
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(json_path.string() + ": " + e.what());
  }
}

GaussianFiles save_operator(const fs::path& stem, const LinearOperator& op, const nlohmann::json& spec) {
  GaussianFiles files{fs::path(stem.string() + ".json"), fs::path(stem.string() + ".bin")};
  const std::string bin = encode_matrix(op.matrix());
  write_file(files.covariance, bin);
  const nlohmann::json j{{"format", "halbach-operator"},
                         {"version", kJsonFormatVersion},
                         {"layout", layout_to_json(op.layout())},
                         {"row_labels", op.row_labels()},
                         {"observable", spec},
                         {"matrix_file", files.covariance.filename().string()},
                         {"matrix_sha256", sha256_hex(bin)}};
  write_json(files.json, j);
  return files;
}

LinearOperator load_operator(const fs::path& json_path) {
  const auto j = read_json(json_path);
  check_header(j, "halbach-operator", json_path);
  try {
    return LinearOperator(read_checked_matrix(json_path, j, "matrix"), layout_from_json(j.at("layout")),
                          j.at("row_labels").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(json_path.string() + ": " + e.what());
  }
}

void write_chain(const fs::path& csv_path, const fs::path& meta_path, const Chain& chain,
                 const ParameterLayout& layout) {
  if (chain.states.rows() != layout.dimension()) throw DomainError("layout does not match the chain dimension");
  std::string csv = "step,accepted,log_likelihood";
  for (const auto& l : layout.labels()) csv += "," + l;
  csv += "\n";
  for (Eigen::Index k = 0; k < chain.n_states(); ++k) {
    // Step 0 is the initial state and carries no acceptance decision.
    const bool acc = k > 0 && chain.accepted[static_cast<std::size_t>(k - 1)] != 0;
    csv += std::to_string(k) + "," + (acc ? "1" : "0") + "," + format_double(chain.log_likelihood(k));
    for (Eigen::Index r = 0; r < chain.states.rows(); ++r) csv += "," + format_double(chain.states(r, k));
    csv += "\n";
  }
  write_file(csv_path, csv);
  const nlohmann::json meta{{"format", "halbach-chain"},
                            {"version", kJsonFormatVersion},
                            {"layout", layout_to_json(layout)},
                            {"seed", chain.seed},
                            {"step_size", chain.step_size},
                            {"strict", chain.strict},
                            {"n_states", chain.n_states()},
                            {"acceptance_rate", chain.n_states() > 1 ? chain.acceptance_rate() : 0.0},
                            {"states_file", csv_path.filename().string()},
                            {"states_sha256", sha256_hex(csv)}};
  write_json(meta_path, meta);
}

Chain read_chain(const fs::path& csv_path, const fs::path& meta_path) {
  const auto meta = read_json(meta_path);
  check_header(meta, "halbach-chain", meta_path);
  const std::string csv = read_file(csv_path);
  if (sha256_hex(csv) != meta.at("states_sha256").get<std::string>()) {
    throw ChecksumError(csv_path.string() + ": checksum does not match " + meta_path.string());
  }
  const ParameterLayout layout = layout_from_json(meta.at("layout"));
  const auto n = meta.at("n_states").get<Eigen::Index>();
  Chain chain;
  chain.seed = meta.at("seed").get<std::uint64_t>();
  chain.step_size = meta.at("step_size").get<double>();
  chain.strict = meta.at("strict").get<bool>();
  chain.states.resize(layout.dimension(), n);
  chain.log_likelihood.resize(n);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  if (static_cast<Eigen::Index>(header.size()) != layout.dimension() + 3) {
    throw DomainError(csv_path.string() + ": header does not match the layout");
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!std::getline(in, line)) throw DomainError(csv_path.string() + ": expected " + std::to_string(n) + " states");
    const auto f = split_csv_line(line);
    const std::string where = csv_path.string() + ":" + std::to_string(k + 2);
    if (f.size() != header.size()) throw DomainError(where + ": wrong number of fields");
    if (k > 0) chain.accepted.push_back(parse_int(f[1], where) != 0 ? 1 : 0);
    chain.log_likelihood(k) = parse_double(f[2], where);
    for (Eigen::Index r = 0; r < layout.dimension(); ++r) {
      chain.states(r, k) = parse_double(f[static_cast<std::size_t>(r + 3)], where);
    }
  }
  return chain;
}

}  // namespace halbach
