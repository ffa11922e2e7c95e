#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace eegmatch {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// channels x time matrix at a declared sampling rate. Column t is one time
// step, so time-distributed operations work on contiguous columns.
struct TimeSeriesTensor {
  Matrix data;
  double fs = 0.0;
  std::vector<std::string> labels;

  TimeSeriesTensor() = default;
  TimeSeriesTensor(Matrix d, double rate, std::vector<std::string> names = {})
      : data(std::move(d)), fs(rate), labels(std::move(names)) {}

  Eigen::Index channels() const { return data.rows(); }
  Eigen::Index frames() const { return data.cols(); }
  double duration_s() const { return static_cast<double>(frames()) / fs; }

  // Throws InvalidInput unless C >= 1, T >= 1, fs > 0 and all values finite.
  void validate() const;
};

enum class DType : std::uint32_t { F32 = 1, F64 = 2 };

// N-dimensional array as stored in the repo tensor format ("NDMM").
struct NdArray {
  std::vector<std::uint64_t> dims;
  std::vector<double> values;  // row-major
  double fs = 0.0;

  std::uint64_t size() const;
};

// Little-endian binary layout:
//   magic "NDMM" | version u32 | dtype u32 | rank u32 | dims u64[rank] | fs f64
//   | payload (row-major)
inline constexpr std::uint32_t kTensorFormatVersion = 1;

void write_ndarray(const std::filesystem::path& path, const NdArray& arr,
                   DType dtype = DType::F64);
NdArray read_ndarray(const std::filesystem::path& path);

// Rank-2 convenience wrappers. Row-major on disk means channel-major here.
void write_tensor(const std::filesystem::path& path, const TimeSeriesTensor& x,
                  DType dtype = DType::F64);
TimeSeriesTensor read_tensor(const std::filesystem::path& path);

NdArray to_ndarray(const TimeSeriesTensor& x);
TimeSeriesTensor from_ndarray(const NdArray& arr);

}  // namespace eegmatch
