#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace recal {

struct GridMass {
  std::size_t index;
  double weight;
};

/// A distribution over grid indices {0..m} with at most two atoms.
///
/// Both forecasters only ever need support size <= 2: the halfspace oracle
/// mixes two consecutive indices and the multiplicative-weights minimax has
/// a basic optimal solution with two nonzeros. Atoms are kept sorted by index.
class ForecastDistribution {
 public:
  static ForecastDistribution point(std::size_t index) {
    ForecastDistribution d;
    d.atoms_[0] = {index, 1.0};
    d.size_ = 1;
    return d;
  }

  /// Two-atom mixture. Zero-weight atoms are dropped, so the result may be a point mass.
  static ForecastDistribution mixture(std::size_t i, double wi, std::size_t j, double wj) {
    if (i == j) throw std::invalid_argument("mixture atoms must be distinct");
    if (!(wi >= 0.0 && wj >= 0.0) || std::abs(wi + wj - 1.0) > 1e-12) {
      throw std::invalid_argument("mixture weights must be nonnegative and sum to 1");
    }
    if (wi == 0.0) return point(j);
    if (wj == 0.0) return point(i);
    ForecastDistribution d;
    if (i < j) {
      d.atoms_ = {GridMass{i, wi}, GridMass{j, wj}};
    } else {
      d.atoms_ = {GridMass{j, wj}, GridMass{i, wi}};
    }
    d.size_ = 2;
    return d;
  }

  std::span<const GridMass> support() const { return {atoms_.data(), size_}; }
  std::size_t size() const { return size_; }
  bool is_point() const { return size_ == 1; }

  bool consecutive() const { return size_ == 1 || atoms_[1].index == atoms_[0].index + 1; }

  double weight_at(std::size_t index) const {
    for (const auto& a : support()) {
      if (a.index == index) return a.weight;
    }
    return 0.0;
  }

  std::vector<double> dense(std::size_t m) const {
    std::vector<double> w(m + 1, 0.0);
    for (const auto& a : support()) w.at(a.index) = a.weight;
    return w;
  }

  /// Inverse-CDF draw for u in [0,1).
  std::size_t sample(double u) const {
    if (size_ == 1 || u < atoms_[0].weight) return atoms_[0].index;
    return atoms_[1].index;
  }

  friend bool operator==(const ForecastDistribution& x, const ForecastDistribution& y) {
    if (x.size_ != y.size_) return false;
    for (std::size_t k = 0; k < x.size_; ++k) {
      if (x.atoms_[k].index != y.atoms_[k].index || x.atoms_[k].weight != y.atoms_[k].weight) return false;
    }
    return true;
  }

 private:
  ForecastDistribution() = default;

  std::array<GridMass, 2> atoms_{};
  std::size_t size_ = 0;
};

}  // namespace recal
