#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "swlab/rng.hpp"

namespace swlab {

// Row-major set of n points of the same dimension.
struct Batch {
  std::size_t n = 0;
  int dim = 1;
  std::vector<double> data;

  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * static_cast<std::size_t>(dim),
            static_cast<std::size_t>(dim)};
  }
  std::span<double> row(std::size_t i) {
    return {data.data() + i * static_cast<std::size_t>(dim),
            static_cast<std::size_t>(dim)};
  }
  static Batch zeros(std::size_t n, int dim) {
    Batch b;
    b.n = n;
    b.dim = dim;
    b.data.assign(n * static_cast<std::size_t>(dim), 0.0);
    return b;
  }
};

struct GaussComponent {
  double weight, mean, std;
};

// Every distribution used by the desk-scale experiments. Mode spreads for the
// 2D families follow the usual toy-GAN conventions: ring8 has 8 modes at
// radius 2 with std 0.02, grid25 is a 5x5 grid over [-4,4]^2 with std 0.05,
// swissroll is the standard spiral scaled by 1/7.5 with point noise std 0.25
// applied before scaling.
struct ToyDistribution {
  enum class Kind {
    kGauss1D,
    kGaussMixture1D,
    kRing8,
    kGrid25,
    kSwissRoll,
    kDirac,
    kUniformBox,
  };

  Kind kind = Kind::kGauss1D;
  double mean = 0.0, std = 1.0;          // gauss1d
  std::vector<GaussComponent> comps;     // mixture
  std::vector<double> point;             // dirac
  std::vector<double> lo, hi;            // uniform box
  // Additive per-coordinate Gaussian noise on top of the base draw; the
  // "real data plus noise" fake of the level-set experiment.
  double extra_noise_std = 0.0;

  static constexpr double kRingRadius = 2.0;
  static constexpr double kRingStd = 0.02;
  static constexpr double kGridStd = 0.05;
  static constexpr double kSwissNoiseStd = 0.25;
  static constexpr double kSwissScale = 7.5;
  // spiral reaches radius 4.5*pi before noise; bound after scaling + 4 sigma
  static constexpr double kSwissBound = (4.5 * 3.14159265358979323846 + 1.0) / 7.5;

  int dim() const {
    switch (kind) {
      case Kind::kGauss1D:
      case Kind::kGaussMixture1D:
        return 1;
      case Kind::kRing8:
      case Kind::kGrid25:
      case Kind::kSwissRoll:
        return 2;
      case Kind::kDirac:
        return static_cast<int>(point.size());
      case Kind::kUniformBox:
        return static_cast<int>(lo.size());
    }
    return 1;
  }

  void validate() const {
    switch (kind) {
      case Kind::kGauss1D:
        if (std <= 0.0) throw std::invalid_argument("gauss1d: std must be > 0");
        break;
      case Kind::kGaussMixture1D: {
        if (comps.empty())
          throw std::invalid_argument("mixture: needs components");
        double wsum = 0.0;
        for (const auto& c : comps) {
          if (c.std <= 0.0) throw std::invalid_argument("mixture: std must be > 0");
          if (c.weight < 0.0) throw std::invalid_argument("mixture: negative weight");
          wsum += c.weight;
        }
        if (std::abs(wsum - 1.0) > 1e-9)
          throw std::invalid_argument("mixture: weights must sum to 1");
        break;
      }
      case Kind::kDirac:
        if (point.empty() || point.size() > 2)
          throw std::invalid_argument("dirac: point must be 1D or 2D");
        break;
      case Kind::kUniformBox:
        if (lo.empty() || lo.size() != hi.size() || lo.size() > 2)
          throw std::invalid_argument("box: lo/hi must match, dim 1 or 2");
        for (std::size_t k = 0; k < lo.size(); ++k)
          if (!(lo[k] < hi[k]))
            throw std::invalid_argument("box: lo must be < hi per dim");
        break;
      default:
        break;
    }
  }

  // Compact config-string grammar, e.g. "gauss1d(0,1)",
  // "mixture(0.5,-5,1;0.5,5,1)", "ring8", "grid25", "swissroll",
  // "dirac(1,0)", "box(-1,0,-1,0)"; append "+noise(std)" for the additive
  // Gaussian variant, e.g. "ring8+noise(0.5)".
  static ToyDistribution parse(const std::string& text);
  std::string to_string() const;

  ToyDistribution with_noise(double noise_std) const {
    ToyDistribution d = *this;
    d.extra_noise_std = noise_std;
    return d;
  }
};

inline std::vector<double> parse_number_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  return out;
}

inline ToyDistribution ToyDistribution::parse(const std::string& text) {
  ToyDistribution d;
  std::string body = text;
  double noise = 0.0;
  if (const auto plus = text.rfind("+noise("); plus != std::string::npos) {
    const auto close = text.rfind(')');
    if (close == std::string::npos || close < plus)
      throw std::invalid_argument("distribution: bad +noise suffix in '" + text + "'");
    noise = std::stod(text.substr(plus + 7, close - plus - 7));
    if (noise < 0.0) throw std::invalid_argument("distribution: negative noise std");
    body = text.substr(0, plus);
  }
  const auto open = body.find('(');
  const std::string name = open == std::string::npos ? body : body.substr(0, open);
  std::string args;
  if (open != std::string::npos) {
    const auto close = body.rfind(')');
    if (close == std::string::npos || close < open)
      throw std::invalid_argument("distribution: unbalanced parentheses in '" + text + "'");
    args = body.substr(open + 1, close - open - 1);
  }
  if (name == "gauss1d") {
    auto v = parse_number_list(args);
    if (v.size() != 2) throw std::invalid_argument("gauss1d expects (mean,std)");
    d.kind = Kind::kGauss1D;
    d.mean = v[0];
    d.std = v[1];
  } else if (name == "mixture") {
    d.kind = Kind::kGaussMixture1D;
    std::stringstream ss(args);
    std::string part;
    while (std::getline(ss, part, ';')) {
      auto v = parse_number_list(part);
      if (v.size() != 3)
        throw std::invalid_argument("mixture expects (w,mean,std;...)");
      d.comps.push_back({v[0], v[1], v[2]});
    }
  } else if (name == "ring8") {
    d.kind = Kind::kRing8;
  } else if (name == "grid25") {
    d.kind = Kind::kGrid25;
  } else if (name == "swissroll") {
    d.kind = Kind::kSwissRoll;
  } else if (name == "dirac") {
    d.kind = Kind::kDirac;
    d.point = parse_number_list(args);
  } else if (name == "box") {
    auto v = parse_number_list(args);
    if (v.size() != 2 && v.size() != 4)
      throw std::invalid_argument("box expects (lo,hi) or (lo1,hi1,lo2,hi2)");
    d.kind = Kind::kUniformBox;
    for (std::size_t k = 0; k < v.size(); k += 2) {
      d.lo.push_back(v[k]);
      d.hi.push_back(v[k + 1]);
    }
  } else {
    throw std::invalid_argument("unknown distribution '" + name + "'");
  }
  d.extra_noise_std = noise;
  d.validate();
  return d;
}

inline std::string ToyDistribution::to_string() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::kGauss1D:
      os << "gauss1d(" << mean << "," << std << ")";
      break;
    case Kind::kGaussMixture1D: {
      os << "mixture(";
      for (std::size_t i = 0; i < comps.size(); ++i) {
        if (i) os << ";";
        os << comps[i].weight << "," << comps[i].mean << "," << comps[i].std;
      }
      os << ")";
      break;
    }
    case Kind::kRing8:
      os << "ring8";
      break;
    case Kind::kGrid25:
      os << "grid25";
      break;
    case Kind::kSwissRoll:
      os << "swissroll";
      break;
    case Kind::kDirac: {
      os << "dirac(";
      for (std::size_t i = 0; i < point.size(); ++i) {
        if (i) os << ",";
        os << point[i];
      }
      os << ")";
      break;
    }
    case Kind::kUniformBox: {
      os << "box(";
      for (std::size_t i = 0; i < lo.size(); ++i) {
        if (i) os << ",";
        os << lo[i] << "," << hi[i];
      }
      os << ")";
      break;
    }
  }
  if (extra_noise_std > 0.0) os << "+noise(" << extra_noise_std << ")";
  return os.str();
}

inline Batch sample(const ToyDistribution& dist, std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("sample: n must be >= 1");
  dist.validate();
  Batch out = Batch::zeros(n, dist.dim());
  switch (dist.kind) {
    case ToyDistribution::Kind::kGauss1D:
      for (std::size_t i = 0; i < n; ++i)
        out.data[i] = rng.normal(dist.mean, dist.std);
      break;
    case ToyDistribution::Kind::kGaussMixture1D:
      for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform();
        double acc = 0.0;
        const GaussComponent* chosen = &dist.comps.back();
        for (const auto& c : dist.comps) {
          acc += c.weight;
          if (u < acc) {
            chosen = &c;
            break;
          }
        }
        out.data[i] = rng.normal(chosen->mean, chosen->std);
      }
      break;
    case ToyDistribution::Kind::kRing8:
      for (std::size_t i = 0; i < n; ++i) {
        const int k = static_cast<int>(rng.uniform() * 8.0) % 8;
        const double a = k * (std::numbers::pi / 4.0);
        auto r = out.row(i);
        r[0] = ToyDistribution::kRingRadius * std::cos(a) +
               rng.normal(0.0, ToyDistribution::kRingStd);
        r[1] = ToyDistribution::kRingRadius * std::sin(a) +
               rng.normal(0.0, ToyDistribution::kRingStd);
      }
      break;
    case ToyDistribution::Kind::kGrid25:
      for (std::size_t i = 0; i < n; ++i) {
        const int k = static_cast<int>(rng.uniform() * 25.0) % 25;
        auto r = out.row(i);
        r[0] = -4.0 + 2.0 * (k % 5) + rng.normal(0.0, ToyDistribution::kGridStd);
        r[1] = -4.0 + 2.0 * (k / 5) + rng.normal(0.0, ToyDistribution::kGridStd);
      }
      break;
    case ToyDistribution::Kind::kSwissRoll:
      for (std::size_t i = 0; i < n; ++i) {
        const double t = 1.5 * std::numbers::pi * (1.0 + 2.0 * rng.uniform());
        auto r = out.row(i);
        r[0] = (t * std::cos(t) + rng.normal(0.0, ToyDistribution::kSwissNoiseStd)) /
               ToyDistribution::kSwissScale;
        r[1] = (t * std::sin(t) + rng.normal(0.0, ToyDistribution::kSwissNoiseStd)) /
               ToyDistribution::kSwissScale;
      }
      break;
    case ToyDistribution::Kind::kDirac:
      for (std::size_t i = 0; i < n; ++i) {
        auto r = out.row(i);
        for (std::size_t k = 0; k < dist.point.size(); ++k) r[k] = dist.point[k];
      }
      break;
    case ToyDistribution::Kind::kUniformBox:
      for (std::size_t i = 0; i < n; ++i) {
        auto r = out.row(i);
        for (std::size_t k = 0; k < dist.lo.size(); ++k)
          r[k] = rng.uniform(dist.lo[k], dist.hi[k]);
      }
      break;
  }
  if (dist.extra_noise_std > 0.0)
    for (auto& v : out.data) v += rng.normal(0.0, dist.extra_noise_std);
  return out;
}

// Points t * x_i + (1 - t) * x_j with t ~ U(0,1). A coincident pair is not an
// error: the batch degenerates to copies of the point and is flagged.
struct InterpolationBatch {
  std::vector<double> xi, xj;
  std::vector<double> ts;
  Batch points;
  bool degenerate = false;
};

inline InterpolationBatch interpolate_with_ts(std::span<const double> xi,
                                              std::span<const double> xj,
                                              std::span<const double> ts) {
  if (xi.size() != xj.size())
    throw std::invalid_argument("interpolate: endpoint dimension mismatch");
  if (ts.empty()) throw std::invalid_argument("interpolate: m must be >= 1");
  InterpolationBatch batch;
  batch.xi.assign(xi.begin(), xi.end());
  batch.xj.assign(xj.begin(), xj.end());
  batch.ts.assign(ts.begin(), ts.end());
  batch.points = Batch::zeros(ts.size(), static_cast<int>(xi.size()));
  bool equal = true;
  for (std::size_t k = 0; k < xi.size(); ++k) equal = equal && xi[k] == xj[k];
  batch.degenerate = equal;
  for (std::size_t j = 0; j < ts.size(); ++j) {
    auto r = batch.points.row(j);
    for (std::size_t k = 0; k < xi.size(); ++k)
      r[k] = ts[j] * xi[k] + (1.0 - ts[j]) * xj[k];
  }
  return batch;
}

inline InterpolationBatch interpolate(std::span<const double> xi,
                                      std::span<const double> xj,
                                      std::size_t m, Rng& rng) {
  if (m == 0) throw std::invalid_argument("interpolate: m must be >= 1");
  std::vector<double> ts(m);
  for (auto& t : ts) t = rng.uniform();
  return interpolate_with_ts(xi, xj, ts);
}

// Density of the uniform measure on the segment [x_j, x_i]: 1/||x_i - x_j||
// on the segment (collinearity tolerance 1e-9), 0 elsewhere.
inline double mu_density(std::span<const double> xi, std::span<const double> xj,
                         std::span<const double> x) {
  if (xi.size() != xj.size() || xi.size() != x.size())
    throw std::invalid_argument("mu_density: dimension mismatch");
  double len2 = 0.0;
  for (std::size_t k = 0; k < xi.size(); ++k) {
    const double d = xi[k] - xj[k];
    len2 += d * d;
  }
  if (len2 == 0.0)
    throw std::invalid_argument("mu_density: x_i = x_j leaves the measure undefined");
  double proj = 0.0;
  for (std::size_t k = 0; k < xi.size(); ++k)
    proj += (x[k] - xj[k]) * (xi[k] - xj[k]);
  const double t = proj / len2;
  double perp2 = 0.0;
  for (std::size_t k = 0; k < xi.size(); ++k) {
    const double r = x[k] - xj[k] - t * (xi[k] - xj[k]);
    perp2 += r * r;
  }
  const double len = std::sqrt(len2);
  if (t >= 0.0 && t <= 1.0 && std::sqrt(perp2) <= 1e-9) return 1.0 / len;
  return 0.0;
}

}  // namespace swlab
