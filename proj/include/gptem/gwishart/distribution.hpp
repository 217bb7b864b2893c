// The G-Wishart distribution and its normalizing constant.
#pragma once

#include "gptem/core.hpp"
#include "gptem/gwishart/graph.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace gptem::gwishart {

/// W_G(df, rate): density proportional to |K|^{(df-2)/2} exp(-tr(rate K)/2)
/// on positive-definite K with zeros off the graph.
struct GWishartParams {
  double df = 3.0;
  Matrix rate;

  static GWishartParams standard(int p, double df = 3.0) { return {df, Matrix::Identity(p, p)}; }

  int dim() const { return static_cast<int>(rate.rows()); }

  void validate() const {
    if (!(df > 0.0) || !std::isfinite(df)) throw InputError("G-Wishart degrees of freedom must be positive");
    if (rate.rows() == 0 || rate.rows() != rate.cols() || !is_symmetric(rate, 1e-10) || !is_positive_definite(rate)) {
      throw InputError("G-Wishart rate matrix must be symmetric positive definite");
    }
  }

  bool operator==(const GWishartParams& o) const {
    return df == o.df && rate.rows() == o.rate.rows() && rate == o.rate;
  }
};

/// Monte Carlo estimate on the log scale together with its standard error.
struct LogEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// ((df-2)/2) log|K| - tr(rate K)/2.
inline double gwishart_unnormalized_logdensity(const Matrix& k, const GWishartParams& params) {
  Eigen::LLT<Matrix> llt(k);
  if (k.rows() != params.rate.rows() || llt.info() != Eigen::Success) {
    throw InputError("precision matrix is not positive definite");
  }
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return 0.5 * (params.df - 2.0) * logdet - 0.5 * (params.rate.cwiseProduct(k)).sum();
}

inline double log_multivariate_gamma(int p, double a) {
  double out = 0.25 * p * (p - 1) * std::log(std::numbers::pi);
  for (int i = 0; i < p; ++i) out += std::lgamma(a - 0.5 * i);
  return out;
}

/// Exact log normalizing constant for the complete graph on `rate.rows()`
/// vertices: the Wishart with nu = df + p - 1 degrees of freedom,
///   (nu p / 2) log 2 + log Gamma_p(nu / 2) - (nu / 2) log|rate|.
inline double wishart_log_norm_const_closed(const GWishartParams& params) {
  params.validate();
  const int p = params.dim();
  const double nu = params.df + p - 1;
  return 0.5 * nu * p * std::numbers::ln2 + log_multivariate_gamma(p, 0.5 * nu) - 0.5 * nu * log_det_spd(params.rate);
}

inline double wishart_log_norm_const_closed(int p, const GWishartParams& params) {
  if (params.dim() != p) throw InputError("rate matrix dimension does not match p");
  return wishart_log_norm_const_closed(params);
}

namespace detail {

inline GWishartParams sub_params(const GWishartParams& params, const std::vector<int>& idx) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Matrix sub(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) sub(a, b) = params.rate(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
  return {params.df, sub};
}

}  // namespace detail

/// Closed form for decomposable graphs: clique constants minus separator
/// constants, each a complete-graph constant on the matching block of rate.
inline double decomposable_log_norm_const(const TraitGraph& graph, const GWishartParams& params) {
  params.validate();
  if (graph.n_vertices() != params.dim()) throw InputError("graph and rate matrix dimensions differ");
  const auto js = junction_sequence(graph);
  if (!js) throw InputError("graph is not decomposable");
  double out = 0.0;
  for (const auto& c : js->cliques) out += wishart_log_norm_const_closed(detail::sub_params(params, c));
  for (const auto& s : js->separators)
    if (!s.empty()) out -= wishart_log_norm_const_closed(detail::sub_params(params, s));
  return out;
}

/// Monte Carlo estimator of log I_G(df, rate) by the Cholesky-completion
/// construction. With rate^{-1} = T'T (T upper triangular) and K = Phi'Phi,
/// Psi = Phi T^{-1} has free entries psi_ii ~ sqrt(chi2(df + nu_i)) and
/// psi_ij ~ N(0,1) on edges (nu_i = number of neighbours j > i). Entries on
/// non-edges are fixed by k_ij = 0, and
///   I_G = C_G * E[exp(-1/2 sum_{non-edges} psi_ij^2)],
///   log C_G = sum_i [ (df+nu_i)/2 log 2 + nu_i/2 log 2pi + lgamma((df+nu_i)/2)
///                     + (df + nu_i + k_i) log t_ii ],
/// with k_i the number of neighbours j < i.
class NormConstEstimator {
 public:
  NormConstEstimator(const TraitGraph& graph, const GWishartParams& params) : graph_(graph), p_(graph.n_vertices()) {
    params.validate();
    if (p_ != params.dim()) throw InputError("graph and rate matrix dimensions differ");
    const Matrix rate_inv = inverse_spd(params.rate);
    Eigen::LLT<Matrix> llt(rate_inv);
    if (llt.info() != Eigen::Success) throw NumericError("rate inverse is not positive definite");
    const Matrix upper = llt.matrixU();
    t_.assign(static_cast<std::size_t>(p_ * p_), 0.0);
    for (int i = 0; i < p_; ++i)
      for (int j = i; j < p_; ++j) t_[idx(i, j)] = upper(i, j);

    log_constant_ = 0.0;
    for (int i = 0; i < p_; ++i) {
      int up = 0, down = 0;
      for (int j = 0; j < p_; ++j) {
        if (j == i || !graph.has_edge(i, j)) continue;
        (j > i ? up : down) += 1;
      }
      const double shape = params.df + up;
      chi_.emplace_back(shape);
      log_constant_ += 0.5 * shape * std::numbers::ln2 + 0.5 * up * std::log(2.0 * std::numbers::pi) +
                       std::lgamma(0.5 * shape) + (params.df + up + down) * std::log(t_[idx(i, i)]);
      for (int j = i + 1; j < p_; ++j)
        if (!graph.has_edge(i, j)) ++n_nonfree_;
    }
    psi_.assign(static_cast<std::size_t>(p_ * p_), 0.0);
    phi_.assign(static_cast<std::size_t>(p_ * p_), 0.0);
  }

  /// Log of the closed-form prefactor C_G.
  double log_constant() const { return log_constant_; }

  /// One draw of -1/2 sum over non-edges of psi_ij^2.
  double sample_log_weight(Rng& rng) {
    double sum_sq = 0.0;
    for (int i = 0; i < p_; ++i) {
      const double psi_ii = std::sqrt(chi_[static_cast<std::size_t>(i)](rng));
      psi_[idx(i, i)] = psi_ii;
      phi_[idx(i, i)] = psi_ii * t_[idx(i, i)];
      for (int j = i + 1; j < p_; ++j) {
        // sum_{k=i}^{j-1} psi_ik t_kj
        double partial = 0.0;
        for (int k = i; k < j; ++k) partial += psi_[idx(i, k)] * t_[idx(k, j)];
        if (graph_.has_edge(i, j)) {
          const double psi = normal_(rng);
          psi_[idx(i, j)] = psi;
          phi_[idx(i, j)] = partial + psi * t_[idx(j, j)];
        } else {
          double cross = 0.0;
          for (int l = 0; l < i; ++l) cross += phi_[idx(l, i)] * phi_[idx(l, j)];
          const double phi = -cross / phi_[idx(i, i)];
          const double psi = (phi - partial) / t_[idx(j, j)];
          phi_[idx(i, j)] = phi;
          psi_[idx(i, j)] = psi;
          sum_sq += psi * psi;
        }
      }
    }
    return -0.5 * sum_sq;
  }

  LogEstimate estimate(int n_samples, Rng& rng) {
    if (n_samples < 1) throw InputError("n_samples must be at least 1");
    if (n_nonfree_ == 0) return {log_constant_, 0.0};
    weights_.resize(static_cast<std::size_t>(n_samples));
    double max_w = -std::numeric_limits<double>::infinity();
    for (auto& w : weights_) {
      w = sample_log_weight(rng);
      max_w = std::max(max_w, w);
    }
    // log-mean-exp, plus delta-method standard error of the log mean.
    double sum = 0.0, sum_sq = 0.0;
    for (double w : weights_) {
      const double e = std::exp(w - max_w);
      sum += e;
      sum_sq += e * e;
    }
    const double n = static_cast<double>(n_samples);
    const double mean = sum / n;
    const double var = n > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1)) : 0.0;
    return {log_constant_ + max_w + std::log(mean), std::sqrt(var / n) / mean};
  }

 private:
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i * p_ + j); }

  TraitGraph graph_;
  int p_;
  std::vector<double> t_, psi_, phi_, weights_;
  std::vector<std::chi_squared_distribution<double>> chi_;
  std::normal_distribution<double> normal_;
  double log_constant_ = 0.0;
  int n_nonfree_ = 0;
};

inline LogEstimate log_norm_const_mc(const TraitGraph& graph, const GWishartParams& params, int n_samples, Rng& rng) {
  return NormConstEstimator(graph, params).estimate(n_samples, rng);
}

inline LogEstimate log_norm_const_mc(const TraitGraph& graph, const GWishartParams& params, int n_samples,
                                     std::uint64_t seed) {
  Rng rng(seed);
  return log_norm_const_mc(graph, params, n_samples, rng);
}

}  // namespace gptem::gwishart
