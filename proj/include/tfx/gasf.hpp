#pragma once
// Image modality: Gramian Angular Summation Field encoding of a traffic
// matrix and its inverse with least-squares refinement.
//
// Data values map to x = eps + (v + pl_max) * (1 - eps) / (2 * pl_max) with
// eps = 1 / (4 * pl_max); padding maps to x = 0, so length survives encoding.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <vector>

#include "tfx/binary_io.hpp"
#include "tfx/core.hpp"

namespace tfx {

struct GasfImage {
  int length = 0;
  int label = 0;
  std::vector<double> pixels;  // row-major length x length

  double at(int i, int j) const { return pixels[static_cast<std::size_t>(i * length + j)]; }
  double& at(int i, int j) { return pixels[static_cast<std::size_t>(i * length + j)]; }
};

inline double gasf_epsilon(int pl_max) { return 1.0 / (4.0 * pl_max); }

/// Spacing between neighbouring data levels in normalized space.
inline double gasf_level_step(int pl_max) { return (1.0 - gasf_epsilon(pl_max)) / (2.0 * pl_max); }

inline double gasf_normalize(int v, int pl_max) {
  if (v == 0) return 0.0;
  return gasf_epsilon(pl_max) + (v + pl_max) * gasf_level_step(pl_max);
}

/// Nearest representable value (0 for the padding level) to normalized x.
inline int gasf_snap(double x, int pl_max) {
  const double eps = gasf_epsilon(pl_max);
  const double step = gasf_level_step(pl_max);
  int best = 0;
  double best_dist = std::abs(x);
  const double u = (x - eps) / step - pl_max;
  const int center = static_cast<int>(std::lround(u));
  for (int v = center - 1; v <= center + 1; ++v) {
    const int c = std::clamp(v, -pl_max, pl_max);
    if (c == 0) continue;
    const double d = std::abs(x - gasf_normalize(c, pl_max));
    if (d < best_dist) {
      best_dist = d;
      best = c;
    }
  }
  // +-1 straddle the unused zero level
  for (int c : {-1, 1}) {
    const double d = std::abs(x - gasf_normalize(c, pl_max));
    if (d < best_dist) {
      best_dist = d;
      best = c;
    }
  }
  return best;
}

inline GasfImage matrix_to_gasf(const TrafficMatrix& tm, int pl_max) {
  const int n = tm.length();
  std::vector<double> phi(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    phi[static_cast<std::size_t>(i)] = std::acos(gasf_normalize(tm.values()[static_cast<std::size_t>(i)], pl_max));
  GasfImage img{n, tm.label(), std::vector<double>(static_cast<std::size_t>(n * n))};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      img.at(i, j) = std::cos(phi[static_cast<std::size_t>(i)] + phi[static_cast<std::size_t>(j)]);
  return img;
}

/// Squared Frobenius reconstruction error of angles `phi` against `img`.
inline double gasf_objective(const GasfImage& img, const std::vector<double>& phi) {
  double total = 0.0;
  for (int i = 0; i < img.length; ++i)
    for (int j = 0; j < img.length; ++j) {
      const double r = std::cos(phi[static_cast<std::size_t>(i)] + phi[static_cast<std::size_t>(j)]) - img.at(i, j);
      total += r * r;
    }
  return total;
}

namespace detail {

/// Terms of the objective that depend on phi_i, evaluated at t.
inline double gasf_coordinate_cost(const GasfImage& img, const std::vector<double>& phi, int i, double t) {
  const double d = std::cos(2.0 * t) - img.at(i, i);
  double cost = d * d;
  for (int j = 0; j < img.length; ++j) {
    if (j == i) continue;
    const double c = std::cos(t + phi[static_cast<std::size_t>(j)]);
    const double r1 = c - img.at(i, j), r2 = c - img.at(j, i);
    cost += r1 * r1 + r2 * r2;
  }
  return cost;
}

}  // namespace detail

/// Coordinate descent on the angles: each round runs one golden-section line
/// search per coordinate over a window around its current value and keeps
/// the result only if it lowers the objective. Returns the objective after
/// each round.
inline std::vector<double> refine_gasf_angles(const GasfImage& img, std::vector<double>& phi, int rounds,
                                              double window = 0.25) {
  constexpr double kHalfPi = std::numbers::pi / 2.0;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  std::vector<double> history;
  for (int r = 0; r < rounds; ++r) {
    bool moved = false;
    for (int i = 0; i < img.length; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      double lo = std::max(0.0, phi[ui] - window);
      double hi = std::min(kHalfPi, phi[ui] + window);
      double a = hi - inv_phi * (hi - lo);
      double b = lo + inv_phi * (hi - lo);
      double fa = detail::gasf_coordinate_cost(img, phi, i, a);
      double fb = detail::gasf_coordinate_cost(img, phi, i, b);
      while (hi - lo > 1e-12) {
        if (fa < fb) {
          hi = b;
          b = a;
          fb = fa;
          a = hi - inv_phi * (hi - lo);
          fa = detail::gasf_coordinate_cost(img, phi, i, a);
        } else {
          lo = a;
          a = b;
          fa = fb;
          b = lo + inv_phi * (hi - lo);
          fb = detail::gasf_coordinate_cost(img, phi, i, b);
        }
      }
      const double cand = 0.5 * (lo + hi);
      if (detail::gasf_coordinate_cost(img, phi, i, cand) < detail::gasf_coordinate_cost(img, phi, i, phi[ui])) {
        phi[ui] = cand;
        moved = true;
      }
    }
    history.push_back(gasf_objective(img, phi));
    // a round that moved nothing is a fixed point; later rounds would repeat it
    if (!moved) {
      history.resize(static_cast<std::size_t>(rounds), history.back());
      break;
    }
  }
  return history;
}

struct GasfDecoded {
  std::optional<TrafficMatrix> matrix;
  /// Data positions discarded because they followed a padding position.
  int truncated_positions = 0;
};

/// Inverse mapping: clamp pixels, start from the diagonal estimate
/// x_i = sqrt((p_ii + 1) / 2), refine, snap each x_i to its nearest level and
/// cut at the first padding position. Rejected when position 0 is padding.
inline GasfDecoded decode_gasf(GasfImage img, int pl_max, int refine_steps = 5) {
  for (auto& p : img.pixels) p = std::clamp(p, -1.0, 1.0);
  const int n = img.length;
  std::vector<double> phi(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    phi[static_cast<std::size_t>(i)] = std::acos(std::clamp(std::sqrt((img.at(i, i) + 1.0) / 2.0), 0.0, 1.0));
  if (refine_steps > 0) refine_gasf_angles(img, phi, refine_steps);
  std::vector<int> values(static_cast<std::size_t>(n), 0);
  GasfDecoded out;
  int effective = n;
  for (int i = 0; i < n; ++i) {
    const int v = gasf_snap(std::cos(phi[static_cast<std::size_t>(i)]), pl_max);
    if (v == 0 && effective == n) effective = i;
    if (i >= effective) {
      if (v != 0) ++out.truncated_positions;
      continue;
    }
    values[static_cast<std::size_t>(i)] = v;
  }
  if (effective == 0) return out;
  out.matrix = TrafficMatrix::from_values(std::move(values), img.label, pl_max);
  return out;
}

inline TrafficMatrix gasf_to_matrix(const GasfImage& img, int pl_max, int refine_steps = 5) {
  auto d = decode_gasf(img, pl_max, refine_steps);
  if (!d.matrix) throw RejectedSample("GASF image decodes to padding at position 0");
  return *std::move(d.matrix);
}

// Binary image file: "TFXG", u32 L, u32 count, then per image an i32 label
// and L*L float32 pixels, row-major, all little-endian.
inline void write_gasf_file(std::ostream& out, const std::vector<GasfImage>& images, int length) {
  ByteWriter w(out);
  w.bytes("TFXG", 4);
  w.u32(static_cast<std::uint32_t>(length));
  w.u32(static_cast<std::uint32_t>(images.size()));
  for (const auto& img : images) {
    if (img.length != length) throw DataError("GASF image size differs from file L");
    w.i32(img.label);
    for (double p : img.pixels) w.f32(static_cast<float>(p));
  }
}

inline std::vector<GasfImage> read_gasf_file(std::istream& in) {
  ByteReader r(in, "GASF file");
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "TFXG", 4) != 0) throw DataError("not a TFXG image file");
  const int length = static_cast<int>(r.u32());
  if (length < 1 || length > 4096) throw DataError("implausible GASF image size");
  const std::uint32_t count = r.u32();
  std::vector<GasfImage> images;
  for (std::uint32_t k = 0; k < count; ++k) {
    GasfImage img{length, r.i32(), {}};
    img.pixels.resize(static_cast<std::size_t>(length * length));
    for (auto& p : img.pixels) p = r.f32();
    images.push_back(std::move(img));
  }
  return images;
}

}  // namespace tfx
