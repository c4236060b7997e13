#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "commdyn/event_log.hpp"

namespace commdyn {

/// Gaussian kernel parameters. All values in seconds except `mu` and `sigma`,
/// which live in the bandwidth-scaled coordinate (x - x_i) / h.
struct KdeParams {
  double mu = 0.0;
  double sigma = 1.0;
  double h = 1.0;

  /// Throws Error(InvalidParams) unless sigma > 0, h > 0 and all are finite.
  void validate() const;

  friend bool operator==(const KdeParams&, const KdeParams&) = default;
};

/// Kernels are treated as zero beyond this many sigmas from their center.
inline constexpr double kTruncationSigmas = 8.0;

/// Default number of samples per viewed range.
inline constexpr std::size_t kDefaultGridSamples = 2048;

/// Uniform sample positions start + i * step, i in [0, n).
struct Grid {
  double start = 0.0;
  double step = 1.0;
  std::size_t n = 2;

  void validate() const;

  double at(std::size_t i) const { return start + static_cast<double>(i) * step; }
  double end() const { return at(n - 1); }

  friend bool operator==(const Grid&, const Grid&) = default;
};

struct DensityProfile {
  Grid grid;
  std::vector<double> f_in;
  std::vector<double> f_out;
  KdeParams params;
  std::size_t n_in = 0;
  std::size_t n_out = 0;

  /// f_in + f_out at every grid point.
  std::vector<double> total() const;
  double peak_total() const;
};

/// G(x) = exp(-((x - mu) / sigma)^2 / 2) / (sigma * sqrt(2 pi)).
double kernel(double x, const KdeParams& params);

/// (1 / (n h)) * sum_i G((t_j - x_i) / h) at every grid point t_j. The
/// timestamps need not be sorted.
std::vector<double> estimate_density(std::span<const double> timestamps, const KdeParams& params,
                                     const Grid& grid);

DensityProfile profile_pair(const PairSequence& seq, const KdeParams& params, const Grid& grid);

/// Composite trapezoid over [t0, t1] clipped to the grid, interpolating
/// linearly inside partial end cells.
double integrate(std::span<const double> samples, const Grid& grid, double t0, double t1);

/// Linear interpolation of grid samples at `t` (clamped to the grid extent).
double interpolate(std::span<const double> samples, const Grid& grid, double t);

/// Grid over [t_min - 8 sigma h, t_max + 8 sigma h] (shifted by mu h) with
/// `target_samples` points. Empty sequences get {start 0, step 1, n 2}.
Grid default_grid(const PairSequence& seq, const KdeParams& params,
                  std::size_t target_samples = kDefaultGridSamples);

/// Grid with `n` samples spanning [from, to].
Grid grid_over(double from, double to, std::size_t n);

void write_profile_csv(std::ostream& out, const DensityProfile& profile);
std::string profile_json(const DensityProfile& profile);

}  // namespace commdyn
