#pragma once

#include "halbach/common.hpp"
#include "halbach/field_analytic.hpp"
#include "halbach/geometry.hpp"
#include "halbach/inference.hpp"
#include "halbach/prior.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace halbach {

/// Stored checksum does not match the payload.
class ChecksumError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// File was written by an unsupported format version.
class VersionError : public DomainError {
 public:
  using DomainError::DomainError;
};

inline constexpr std::uint32_t kMatrixFormatVersion = 1;
inline constexpr std::uint32_t kJsonFormatVersion = 1;

/// Lower-case hex SHA-256 of a byte string or a file.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Binary matrix file:
///   bytes 0..7    magic "HLBMAT\0\0"
///   bytes 8..11   format version, uint32 little-endian
///   bytes 12..19  rows, uint64 little-endian
///   bytes 20..27  cols, uint64 little-endian
///   then rows·cols float64 little-endian, row-major
///   then the 32-byte SHA-256 of everything before it.
std::string encode_matrix(const Eigen::MatrixXd& m);
Eigen::MatrixXd decode_matrix(std::string_view bytes, const std::string& what);
void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(const std::filesystem::path& path);

/// Whole file contents; throws DomainError if it cannot be read.
std::string read_file(const std::filesystem::path& path);
/// Writes `contents` to `path`, creating parent directories.
void write_file(const std::filesystem::path& path, std::string_view contents);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

nlohmann::json layout_to_json(const ParameterLayout& layout);
ParameterLayout layout_from_json(const nlohmann::json& j);

/// Gaussian saved as `<stem>.json` (mean, labels, covariance checksum) and
/// `<stem>.cov.bin` (covariance). Loading verifies both checksums.
struct GaussianFiles {
  std::filesystem::path json;
  std::filesystem::path covariance;
};
GaussianFiles save_gaussian(const std::filesystem::path& stem, const GaussianDensity& density,
                            const ParameterLayout& layout, const std::string& kind);
GaussianDensity load_gaussian(const std::filesystem::path& json_path, ParameterLayout* layout = nullptr);

/// Operator saved as `<stem>.json` (layout, row labels, observable) and
/// `<stem>.bin` (matrix).
GaussianFiles save_operator(const std::filesystem::path& stem, const LinearOperator& op, const nlohmann::json& spec);
LinearOperator load_operator(const std::filesystem::path& json_path);

/// Chain as CSV with columns `step,accepted,log_likelihood,<labels>`, one
/// state per row, plus JSON metadata (seed, step size, acceptance rate).
void write_chain(const std::filesystem::path& csv_path, const std::filesystem::path& meta_path, const Chain& chain,
                 const ParameterLayout& layout);
Chain read_chain(const std::filesystem::path& csv_path, const std::filesystem::path& meta_path);

}  // namespace halbach
