#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library's numeric code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "commdyn/event_log.hpp"

namespace oracle {

inline double gaussian(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

// Untruncated (1 / (n h)) sum_i G((t - x_i) / h).
inline double density(const std::vector<double>& xs, double mu, double sigma, double h, double t) {
  if (xs.empty()) return 0.0;
  long double sum = 0.0L;
  for (double x : xs) sum += gaussian((t - x) / h, mu, sigma);
  return static_cast<double>(sum / (static_cast<long double>(xs.size()) * h));
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Exact count-weighted mass of the kernel sum over [a, b]: sum_i of each
// kernel's probability mass in that window.
inline double weighted_mass(const std::vector<double>& xs, double mu, double sigma, double h, double a,
                            double b) {
  long double m = 0.0L;
  for (double x : xs) {
    const double za = ((a - x) / h - mu) / sigma;
    const double zb = ((b - x) / h - mu) / sigma;
    m += normal_cdf(zb) - normal_cdf(za);
  }
  return static_cast<double>(m);
}

// Composite Simpson with `panels` (even) subintervals.
inline double simpson(const std::function<double(double)>& f, double a, double b, std::size_t panels) {
  if (panels % 2) ++panels;
  const double step = (b - a) / static_cast<double>(panels);
  long double acc = f(a) + f(b);
  for (std::size_t i = 1; i < panels; ++i) {
    acc += (i % 2 ? 4.0L : 2.0L) * f(a + step * static_cast<double>(i));
  }
  return static_cast<double>(acc * step / 3.0L);
}

// Synchronicity computed from untruncated densities on [a, b].
inline double synchronicity(const std::vector<double>& in, const std::vector<double>& out, double mu,
                            double sigma, double h, double a, double b, std::size_t panels = 40000) {
  const double nin = static_cast<double>(in.size());
  const double nout = static_cast<double>(out.size());
  auto diff = [&](double t) {
    return std::abs(nin * density(in, mu, sigma, h, t) - nout * density(out, mu, sigma, h, t));
  };
  auto sum = [&](double t) {
    return nin * density(in, mu, sigma, h, t) + nout * density(out, mu, sigma, h, t);
  };
  const double den = simpson(sum, a, b, panels);
  return den > 0.0 ? simpson(diff, a, b, panels) / den : 0.0;
}

inline commdyn::PairSequence sequence(std::vector<std::pair<double, commdyn::Direction>> events,
                                      std::string a = "a", std::string b = "b") {
  std::stable_sort(events.begin(), events.end(),
                   [](const auto& l, const auto& r) { return l.first < r.first; });
  commdyn::PairSequence seq;
  seq.a = std::move(a);
  seq.b = std::move(b);
  for (const auto& [t, d] : events) seq.events.push_back({t, d});
  return seq;
}

// Burst-structured random sequence with distinct continuous timestamps.
inline commdyn::PairSequence random_sequence(std::mt19937_64& rng, std::size_t max_events = 40) {
  std::uniform_int_distribution<std::size_t> count(1, max_events);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = count(rng);
  std::vector<std::pair<double, commdyn::Direction>> ev;
  double t = unit(rng) * 1000.0;
  for (std::size_t i = 0; i < n; ++i) {
    t += unit(rng) < 0.1 ? 50.0 + unit(rng) * 200.0 : 0.1 + unit(rng) * 5.0;
    ev.emplace_back(t, unit(rng) < 0.5 ? commdyn::Direction::Outgoing : commdyn::Direction::Incoming);
  }
  return sequence(std::move(ev));
}

inline commdyn::PairSequence flipped(const commdyn::PairSequence& seq) {
  commdyn::PairSequence out{seq.b, seq.a, seq.events};
  for (auto& e : out.events) e.direction = commdyn::flip(e.direction);
  return out;
}

inline double rel_error(double got, double want, double scale) {
  return std::abs(got - want) / std::max(scale, 1e-300);
}

}  // namespace oracle
