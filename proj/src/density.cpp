#include "commdyn/density.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "json.hpp"

#include "commdyn/error.hpp"
#include "commdyn/text.hpp"

namespace commdyn {

void KdeParams::validate() const {
  if (!std::isfinite(mu) || !std::isfinite(sigma) || !std::isfinite(h) || sigma <= 0.0 || h <= 0.0) {
    throw Error(ErrorCode::InvalidParams, "kde params need finite mu, sigma > 0 and h > 0");
  }
}

void Grid::validate() const {
  if (!std::isfinite(start) || !std::isfinite(step) || step <= 0.0 || n < 2) {
    throw Error(ErrorCode::InvalidParams, "grid needs finite start, step > 0 and n >= 2");
  }
}

std::vector<double> DensityProfile::total() const {
  std::vector<double> out(f_in.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f_in[i] + f_out[i];
  return out;
}

double DensityProfile::peak_total() const {
  double peak = 0.0;
  for (std::size_t i = 0; i < f_in.size(); ++i) peak = std::max(peak, f_in[i] + f_out[i]);
  return peak;
}

double kernel(double x, const KdeParams& params) {
  const double z = (x - params.mu) / params.sigma;
  return std::exp(-0.5 * z * z) / (params.sigma * std::sqrt(2.0 * std::numbers::pi));
}

std::vector<double> estimate_density(std::span<const double> timestamps, const KdeParams& params,
                                     const Grid& grid) {
  params.validate();
  grid.validate();
  std::vector<double> out(grid.n, 0.0);
  if (timestamps.empty()) return out;

  std::vector<double> xs(timestamps.begin(), timestamps.end());
  std::sort(xs.begin(), xs.end());

  const double radius = kTruncationSigmas * params.sigma;
  const double norm = 1.0 / (static_cast<double>(xs.size()) * params.h);
  auto offset = [&](double t, double x) { return (t - x) / params.h - params.mu; };

  // Grid points ascend, so the window of contributing events only slides right.
  std::size_t lo = 0;
  std::size_t hi = 0;
  for (std::size_t j = 0; j < grid.n; ++j) {
    const double t = grid.at(j);
    while (lo < xs.size() && offset(t, xs[lo]) > radius) ++lo;
    if (hi < lo) hi = lo;
    while (hi < xs.size() && offset(t, xs[hi]) >= -radius) ++hi;
    double sum = 0.0;
    for (std::size_t i = lo; i < hi; ++i) sum += kernel((t - xs[i]) / params.h, params);
    out[j] = sum * norm;
  }
  return out;
}

DensityProfile profile_pair(const PairSequence& seq, const KdeParams& params, const Grid& grid) {
  const auto in = seq.timestamps(Direction::Incoming);
  const auto out = seq.timestamps(Direction::Outgoing);
  DensityProfile profile;
  profile.grid = grid;
  profile.params = params;
  profile.n_in = in.size();
  profile.n_out = out.size();
  profile.f_in = estimate_density(in, params, grid);
  profile.f_out = estimate_density(out, params, grid);
  return profile;
}

double interpolate(std::span<const double> samples, const Grid& grid, double t) {
  if (t <= grid.start) return samples.front();
  if (t >= grid.end()) return samples[grid.n - 1];
  const double pos = (t - grid.start) / grid.step;
  const auto k = std::min(static_cast<std::size_t>(pos), grid.n - 2);
  const double frac = (t - grid.at(k)) / grid.step;
  return samples[k] + frac * (samples[k + 1] - samples[k]);
}

double integrate(std::span<const double> samples, const Grid& grid, double t0, double t1) {
  grid.validate();
  if (samples.size() != grid.n) {
    throw Error(ErrorCode::InvalidParams, "sample count does not match grid");
  }
  if (!(t0 <= t1)) throw Error(ErrorCode::InvalidInterval, "integration interval has t0 > t1");

  const double a = std::max(t0, grid.start);
  const double b = std::min(t1, grid.end());
  if (!(a < b)) return 0.0;

  auto cell_of = [&](double t) {
    const double pos = std::floor((t - grid.start) / grid.step);
    return std::min(static_cast<std::size_t>(std::max(pos, 0.0)), grid.n - 2);
  };
  const auto ka = cell_of(a);
  const auto kb = cell_of(b);
  const double va = interpolate(samples, grid, a);
  const double vb = interpolate(samples, grid, b);
  if (ka == kb) return 0.5 * (b - a) * (va + vb);

  double area = 0.5 * (grid.at(ka + 1) - a) * (va + samples[ka + 1]);
  double inner = 0.0;
  for (std::size_t i = ka + 1; i < kb; ++i) inner += samples[i] + samples[i + 1];
  area += 0.5 * grid.step * inner;
  area += 0.5 * (b - grid.at(kb)) * (samples[kb] + vb);
  return area;
}

Grid grid_over(double from, double to, std::size_t n) {
  if (n < 2) throw Error(ErrorCode::InvalidParams, "grid needs at least 2 samples");
  if (!(to > from)) throw Error(ErrorCode::InvalidInterval, "grid range must have to > from");
  return Grid{from, (to - from) / static_cast<double>(n - 1), n};
}

Grid default_grid(const PairSequence& seq, const KdeParams& params, std::size_t target_samples) {
  params.validate();
  if (target_samples < 2) throw Error(ErrorCode::InvalidParams, "grid needs at least 2 samples");
  if (seq.empty()) return Grid{0.0, 1.0, 2};
  double t_min = seq.events.front().timestamp;
  double t_max = t_min;
  for (const auto& e : seq.events) {
    t_min = std::min(t_min, e.timestamp);
    t_max = std::max(t_max, e.timestamp);
  }
  const double reach = kTruncationSigmas * params.sigma * params.h;
  const double shift = params.mu * params.h;
  return grid_over(t_min + shift - reach, t_max + shift + reach, target_samples);
}

void write_profile_csv(std::ostream& out, const DensityProfile& p) {
  out << "# mu=" << text::format_number(p.params.mu)
      << " sigma=" << text::format_number(p.params.sigma)
      << " h=" << text::format_number(p.params.h) << " n_in=" << p.n_in << " n_out=" << p.n_out
      << " grid_start=" << text::format_number(p.grid.start)
      << " grid_step=" << text::format_number(p.grid.step) << " grid_n=" << p.grid.n << '\n';
  out << "t,f_in,f_out\n";
  for (std::size_t i = 0; i < p.grid.n; ++i) {
    out << text::format_number(p.grid.at(i)) << ',' << text::format_number(p.f_in[i]) << ','
        << text::format_number(p.f_out[i]) << '\n';
  }
}

std::string profile_json(const DensityProfile& p) {
  nlohmann::ordered_json j;
  j["grid"] = {{"start", p.grid.start}, {"step", p.grid.step}, {"n", p.grid.n}};
  j["f_in"] = p.f_in;
  j["f_out"] = p.f_out;
  j["params"] = {{"mu", p.params.mu}, {"sigma", p.params.sigma}, {"h", p.params.h}};
  j["n_in"] = p.n_in;
  j["n_out"] = p.n_out;
  return j.dump();
}

}  // namespace commdyn
