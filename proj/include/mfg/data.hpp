#pragma once

// Target and noise samplers, plus IDX image ingestion. Every sampler is a
// pure function of its arguments and the rng state, so batches are
// reproducible from (seed, stream, step) alone.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace mfg {

namespace detail {

// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
inline Tensor cholesky_lower(const Tensor& a) {
  const int64_t d = a.rows();
  Tensor l = Tensor::zeros({d, d});
  for (int64_t i = 0; i < d; ++i) {
    for (int64_t j = 0; j <= i; ++j) {
      double acc = a.at(i, j);
      for (int64_t k = 0; k < j; ++k) acc -= l.at(i, k) * l.at(j, k);
      if (i == j) {
        if (!(acc > 0.0))
          raise(Errc::domain, "gaussian target: covariance is not positive definite");
        l.at(i, i) = std::sqrt(acc);
      } else {
        l.at(i, j) = acc / l.at(j, j);
      }
    }
  }
  return l;
}

}  // namespace detail

struct GaussianTarget {
  Tensor mean;             // (d)
  Tensor covariance;       // (d,d)
  Tensor cholesky_factor;  // (d,d) lower triangular, cached at construction

  int64_t dim() const { return mean.numel(); }

  static GaussianTarget make(Tensor mean_vec, Tensor cov) {
    if (mean_vec.rank() != 1 || mean_vec.numel() < 1)
      raise(Errc::shape_mismatch, "gaussian target: mean must be a nonempty vector, got " +
                                      Tensor::shape_str(mean_vec.shape));
    const int64_t d = mean_vec.numel();
    if (cov.rank() != 2 || cov.rows() != d || cov.cols() != d)
      raise(Errc::shape_mismatch, "gaussian target: covariance must be (" + std::to_string(d) +
                                      "," + std::to_string(d) + "), got " + Tensor::shape_str(cov.shape));
    for (int64_t i = 0; i < d; ++i)
      for (int64_t j = i + 1; j < d; ++j)
        if (std::fabs(cov.at(i, j) - cov.at(j, i)) > 1e-12)
          raise(Errc::precondition, "gaussian target: covariance must be symmetric");
    GaussianTarget t;
    t.cholesky_factor = detail::cholesky_lower(cov);
    t.mean = std::move(mean_vec);
    t.covariance = std::move(cov);
    return t;
  }

  static GaussianTarget isotropic(const std::vector<double>& mean_vec) {
    const int64_t d = static_cast<int64_t>(mean_vec.size());
    Tensor eye = Tensor::zeros({d, d});
    for (int64_t i = 0; i < d; ++i) eye.at(i, i) = 1.0;
    return make(Tensor::row(mean_vec), std::move(eye));
  }
};

// (n,d) rows of mean + L*xi with xi standard normal, drawn row-major.
inline Tensor sample_gaussian(const GaussianTarget& target, int64_t n, Rng& rng) {
  if (n < 1) raise(Errc::precondition, "sample_gaussian: need n >= 1");
  const int64_t d = target.dim();
  const Tensor& l = target.cholesky_factor;
  Tensor out = Tensor::zeros({n, d});
  std::vector<double> xi(static_cast<size_t>(d));
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) xi[static_cast<size_t>(j)] = rng.normal();
    for (int64_t k = 0; k < d; ++k) {
      double acc = target.mean.at(k);
      for (int64_t j = 0; j <= k; ++j) acc += l.at(k, j) * xi[static_cast<size_t>(j)];
      out.at(i, k) = acc;
    }
  }
  return out;
}

// (n,d) standard normal draws, row-major.
inline Tensor sample_noise(int64_t n, int64_t d, Rng& rng) {
  if (n < 1 || d < 1) raise(Errc::precondition, "sample_noise: need n >= 1 and d >= 1");
  Tensor out = Tensor::zeros({n, d});
  for (double& x : out.data) x = rng.normal();
  return out;
}

// (n,1) i.i.d. Unif[0,1] times.
inline Tensor sample_time(int64_t n, Rng& rng) {
  if (n < 1) raise(Errc::precondition, "sample_time: need n >= 1");
  Tensor out = Tensor::zeros({n, 1});
  for (double& x : out.data) x = rng.uniform();
  return out;
}

struct ImageDataset {
  Tensor images;  // (n,784), pixels in [0,1]
  int64_t count = 0;
};

inline constexpr uint32_t kIdxImageMagic = 0x00000803u;

namespace detail {

inline bool read_be32(std::istream& in, uint32_t& out) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  out = (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
        (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
  return true;
}

inline void put_be32(std::string& buf, uint32_t v) {
  buf.push_back(static_cast<char>(v >> 24));
  buf.push_back(static_cast<char>(v >> 16));
  buf.push_back(static_cast<char>(v >> 8));
  buf.push_back(static_cast<char>(v));
}

inline std::string hex32(uint32_t v) {
  char s[16];
  std::snprintf(s, sizeof s, "0x%08x", v);
  return s;
}

}  // namespace detail

// Reads the IDX image container: big-endian magic 0x00000803, then n, 28, 28,
// then n*784 raw bytes scaled by 1/255. Trailing bytes beyond the declared
// payload are ignored.
inline ImageDataset load_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::io, "idx: cannot open " + path);

  uint32_t magic = 0;
  if (!detail::read_be32(in, magic))
    raise(Errc::idx_truncated, "idx: file ends inside the header: " + path);
  if (magic != kIdxImageMagic)
    raise(Errc::idx_magic,
          "idx: magic " + detail::hex32(magic) + ", expected " + detail::hex32(kIdxImageMagic));

  uint32_t n = 0, rows = 0, cols = 0;
  if (!detail::read_be32(in, n) || !detail::read_be32(in, rows) || !detail::read_be32(in, cols))
    raise(Errc::idx_truncated, "idx: file ends inside the header: " + path);
  if (rows != 28 || cols != 28)
    raise(Errc::idx_dims, "idx: image size " + std::to_string(rows) + "x" + std::to_string(cols) +
                              ", expected 28x28");

  const int64_t count = static_cast<int64_t>(n);
  const uint64_t expected = 16 + 784ull * n;
  std::error_code ec;
  const uint64_t actual = std::filesystem::file_size(path, ec);
  if (!ec && actual < expected)
    raise(Errc::idx_truncated, "idx: payload holds " + std::to_string(actual - 16) + " bytes, " +
                                   "header declares " + std::to_string(expected - 16));

  std::vector<unsigned char> buf(static_cast<size_t>(784) * static_cast<size_t>(count));
  if (!buf.empty() &&
      !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    raise(Errc::idx_truncated, "idx: payload ends early: " + path);

  ImageDataset ds;
  ds.count = count;
  ds.images = Tensor::zeros({count, 784});
  for (size_t i = 0; i < buf.size(); ++i) ds.images.data[i] = buf[i] / 255.0;
  return ds;
}

// Quantizes (n,784) pixels in [0,1] to bytes and writes the IDX container.
inline void write_idx_images(const std::string& path, const Tensor& images) {
  if (images.rank() != 2 || images.cols() != 784)
    raise(Errc::shape_mismatch, "idx: expected (n,784) images, got " + Tensor::shape_str(images.shape));
  for (double x : images.data)
    if (!(x >= 0.0 && x <= 1.0))
      raise(Errc::precondition, "idx: pixel values must lie in [0,1]");

  std::string buf;
  buf.reserve(16 + images.data.size());
  detail::put_be32(buf, kIdxImageMagic);
  detail::put_be32(buf, static_cast<uint32_t>(images.rows()));
  detail::put_be32(buf, 28);
  detail::put_be32(buf, 28);
  for (double x : images.data)
    buf.push_back(static_cast<char>(static_cast<unsigned char>(std::llround(x * 255.0))));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(Errc::io, "idx: cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) raise(Errc::io, "idx: short write to " + path);
}

}  // namespace mfg
