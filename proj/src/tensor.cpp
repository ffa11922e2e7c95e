#include "eegmatch/tensor.hpp"

#include "eegmatch/error.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace eegmatch {

static_assert(std::endian::native == std::endian::little,
              "tensor I/O assumes a little-endian host");

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::InvalidSpec: return "invalid-spec";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::ShapeMismatch: return "shape-mismatch";
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::NotFound: return "not-found";
    case ErrorKind::Numerical: return "numerical";
    case ErrorKind::State: return "state";
  }
  return "unknown";
}

void TimeSeriesTensor::validate() const {
  require(data.rows() >= 1 && data.cols() >= 1, ErrorKind::InvalidInput,
          "tensor must have at least one channel and one frame");
  require(fs > 0.0 && std::isfinite(fs), ErrorKind::InvalidInput,
          "sampling rate must be positive");
  require(data.allFinite(), ErrorKind::InvalidInput,
          "tensor contains non-finite values");
  require(labels.empty() || labels.size() == static_cast<size_t>(data.rows()),
          ErrorKind::InvalidInput, "label count does not match channel count");
}

std::uint64_t NdArray::size() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

namespace {

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) fail(ErrorKind::Format, "truncated tensor file: " + path.string());
  return v;
}

}  // namespace

void write_ndarray(const std::filesystem::path& path, const NdArray& arr,
                   DType dtype) {
  require(arr.values.size() == arr.size(), ErrorKind::ShapeMismatch,
          "ndarray payload does not match its dims");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open for writing: " + path.string());
  out.write("NDMM", 4);
  put<std::uint32_t>(out, kTensorFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dtype));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(arr.dims.size()));
  for (auto d : arr.dims) put<std::uint64_t>(out, d);
  put<double>(out, arr.fs);
  if (dtype == DType::F64) {
    out.write(reinterpret_cast<const char*>(arr.values.data()),
              static_cast<std::streamsize>(arr.values.size() * sizeof(double)));
  } else {
    std::vector<float> tmp(arr.values.begin(), arr.values.end());
    out.write(reinterpret_cast<const char*>(tmp.data()),
              static_cast<std::streamsize>(tmp.size() * sizeof(float)));
  }
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

NdArray read_ndarray(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::NotFound, "cannot open tensor file: " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || std::memcmp(magic.data(), "NDMM", 4) != 0)
    fail(ErrorKind::Format, "bad magic in tensor file: " + path.string());
  const auto version = get<std::uint32_t>(in, path);
  if (version != kTensorFormatVersion)
    fail(ErrorKind::Format, "unsupported tensor format version " +
                                std::to_string(version) + ": " + path.string());
  const auto dtype = get<std::uint32_t>(in, path);
  if (dtype != 1 && dtype != 2)
    fail(ErrorKind::Format, "unknown dtype code " + std::to_string(dtype));
  const auto rank = get<std::uint32_t>(in, path);
  if (rank > 16) fail(ErrorKind::Format, "implausible tensor rank");
  NdArray arr;
  arr.dims.resize(rank);
  for (auto& d : arr.dims) d = get<std::uint64_t>(in, path);
  arr.fs = get<double>(in, path);
  const auto n = arr.size();
  arr.values.resize(n);
  if (dtype == 2) {
    in.read(reinterpret_cast<char*>(arr.values.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
  } else {
    std::vector<float> tmp(n);
    in.read(reinterpret_cast<char*>(tmp.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    std::copy(tmp.begin(), tmp.end(), arr.values.begin());
  }
  if (!in) fail(ErrorKind::Format, "truncated tensor payload: " + path.string());
  return arr;
}

NdArray to_ndarray(const TimeSeriesTensor& x) {
  NdArray arr;
  arr.dims = {static_cast<std::uint64_t>(x.channels()),
              static_cast<std::uint64_t>(x.frames())};
  arr.fs = x.fs;
  arr.values.resize(arr.size());
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      arr.values.data(), x.channels(), x.frames()) = x.data;
  return arr;
}

TimeSeriesTensor from_ndarray(const NdArray& arr) {
  require(arr.dims.size() == 2, ErrorKind::Format,
          "expected a rank-2 tensor, got rank " + std::to_string(arr.dims.size()));
  const auto rows = static_cast<Eigen::Index>(arr.dims[0]);
  const auto cols = static_cast<Eigen::Index>(arr.dims[1]);
  Matrix m = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                            Eigen::RowMajor>>(arr.values.data(), rows, cols);
  return TimeSeriesTensor(std::move(m), arr.fs);
}

void write_tensor(const std::filesystem::path& path, const TimeSeriesTensor& x,
                  DType dtype) {
  write_ndarray(path, to_ndarray(x), dtype);
}

TimeSeriesTensor read_tensor(const std::filesystem::path& path) {
  return from_ndarray(read_ndarray(path));
}

}  // namespace eegmatch
