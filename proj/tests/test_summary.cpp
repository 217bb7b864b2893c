#include "gptem/summary/metrics.hpp"
#include "gptem/summary/posterior.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace gptem;
using namespace gptem::summary;
using gptem::mcmc::ChainTrace;
using gptem::mcmc::TraceSample;

namespace {

ChainTrace make_trace(int p, const std::vector<std::pair<std::vector<std::uint8_t>, Matrix>>& samples) {
  ChainTrace t;
  t.p = p;
  long it = 0;
  for (const auto& [g, k] : samples) t.samples.push_back({++it, g, ChainTrace::pack_upper(k)});
  return t;
}

Matrix sym2(double d1, double off, double d2) {
  Matrix k(2, 2);
  k << d1, off, off, d2;
  return k;
}

}  // namespace

TEST(Inclusion, CountsIndicatorFrequencies) {
  const Matrix i2 = Matrix::Identity(2, 2);
  const auto t = make_trace(2, {{{1}, sym2(1, 0.1, 1)}, {{1}, sym2(1, 0.2, 1)}, {{0}, i2}, {{1}, sym2(1, 0.3, 1)}});
  const Matrix pe = edge_inclusion_probabilities(t);
  EXPECT_DOUBLE_EQ(pe(0, 1), 0.75);
  EXPECT_DOUBLE_EQ(pe(1, 0), 0.75);
  EXPECT_THROW(edge_inclusion_probabilities(ChainTrace{}), InputError);
}

TEST(GraphEstimate, BayesFactorArithmetic) {
  Matrix pe = Matrix::Identity(4, 4);
  pe(0, 1) = pe(1, 0) = 0.5;
  pe(0, 2) = pe(2, 0) = 0.9;
  pe(0, 3) = pe(3, 0) = 1.0;
  pe(1, 2) = pe(2, 1) = 0.0;
  const auto est = estimate_graph(pe);
  EXPECT_DOUBLE_EQ(est.bayes_factors(0, 1), 1.0);
  EXPECT_FALSE(est.graph.has_edge(0, 1));
  EXPECT_NEAR(est.bayes_factors(0, 2), 9.0, 1e-12);
  EXPECT_TRUE(est.graph.has_edge(0, 2));
  EXPECT_TRUE(std::isinf(est.bayes_factors(0, 3)));
  EXPECT_TRUE(est.graph.has_edge(0, 3));
  EXPECT_EQ(est.bayes_factors(1, 2), 0.0);
  EXPECT_EQ(est.graph.edge_count(), 2);
  EXPECT_THROW(estimate_graph(pe, 0.0), InputError);
}

TEST(GraphEstimate, BoundaryIsTheInclusionProbabilityOfTheThreshold) {
  const long double t = std::sqrt(10.0L);
  const double boundary = static_cast<double>(t / (1.0L + t));
  EXPECT_NEAR(inclusion_boundary(std::sqrt(10.0)), boundary, 1e-15);
  auto included = [](double v) {
    Matrix pe = Matrix::Identity(2, 2);
    pe(0, 1) = pe(1, 0) = v;
    return estimate_graph(pe).graph.has_edge(0, 1);
  };
  EXPECT_TRUE(included(boundary));
  EXPECT_TRUE(included(boundary + 1e-12));
  EXPECT_FALSE(included(boundary - 1e-12));
  // 0.7597 sits just below the exact boundary 0.759746926...
  EXPECT_FALSE(included(0.7597));
  EXPECT_TRUE(included(0.7598));

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 10000; ++k) {
    const double v = u(rng);
    const long double bf = static_cast<long double>(v) / (1.0L - v);
    EXPECT_EQ(included(v), bf >= t) << v;
  }
}

TEST(PrecisionEstimate, AveragesOnlyConsistentSamples) {
  // Samples: two with the edge (k12 = -0.4, -0.6), two without.
  const auto t = make_trace(2, {{{1}, sym2(2.0, -0.4, 1.0)},
                                {{0}, sym2(3.0, 0.0, 2.0)},
                                {{1}, sym2(4.0, -0.6, 3.0)},
                                {{0}, sym2(5.0, 0.0, 4.0)}});
  const Matrix with_edge = estimate_precision(t, TraitGraph::complete(2));
  EXPECT_DOUBLE_EQ(with_edge(0, 1), -0.5);
  EXPECT_DOUBLE_EQ(with_edge(0, 0), 3.5);
  EXPECT_DOUBLE_EQ(with_edge(1, 1), 2.5);
  const Matrix without = estimate_precision(t, TraitGraph::empty(2));
  EXPECT_EQ(without(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(without(0, 0), 3.5);

  const auto all_on = make_trace(2, {{{1}, sym2(2.0, -0.4, 1.0)}, {{1}, sym2(4.0, -0.6, 3.0)}});
  EXPECT_THROW(estimate_precision(all_on, TraitGraph::empty(2)), NumericError);
}

TEST(PrecisionEstimate, FullModelTraceGivesPlainMean) {
  Matrix a(3, 3), b(3, 3);
  a << 2, 0.5, 0.1, 0.5, 2, 0.2, 0.1, 0.2, 2;
  b << 3, -0.5, 0.3, -0.5, 1, 0.4, 0.3, 0.4, 2;
  const auto t = make_trace(3, {{{1, 1, 1}, a}, {{1, 1, 1}, b}});
  const Matrix pe = edge_inclusion_probabilities(t);
  EXPECT_TRUE(pe.isApprox(Matrix::Ones(3, 3)));
  const auto est = estimate_graph(pe);
  EXPECT_TRUE(estimate_precision(t, est.graph).isApprox(0.5 * (a + b), 1e-15));
}

TEST(Correlation, HandInvertedTwoByTwo) {
  const auto t = make_trace(2, {{{1}, sym2(1.0, -0.5, 1.0)}});
  const Matrix r = estimate_correlation(t);
  // Sigma = [[1, .5], [.5, 1]] / 0.75, so r12 = 0.5.
  EXPECT_NEAR(r(0, 1), 0.5, 1e-15);
  EXPECT_EQ(r(0, 0), 1.0);
  EXPECT_EQ(r(1, 1), 1.0);
  const auto id = make_trace(3, {{{0, 0, 0}, Matrix::Identity(3, 3)}, {{0, 0, 0}, 2.0 * Matrix::Identity(3, 3)}});
  EXPECT_TRUE(estimate_correlation(id).isApprox(Matrix::Identity(3, 3)));
}

TEST(Correlation, EntriesAreBoundedAndSymmetric) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z;
  std::vector<std::pair<std::vector<std::uint8_t>, Matrix>> samples;
  for (int s = 0; s < 50; ++s) {
    Matrix a(4, 4);
    for (int i = 0; i < 16; ++i) a.data()[i] = z(rng);
    samples.push_back({{1, 1, 1, 1, 1, 1}, a * a.transpose() + 0.01 * Matrix::Identity(4, 4)});
  }
  const Matrix r = estimate_correlation(make_trace(4, samples));
  EXPECT_EQ(r, r.transpose());
  EXPECT_LE(r.cwiseAbs().maxCoeff(), 1.0);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(r(i, i), 1.0);
}

TEST(SignProbability, TiesCountAsPositive) {
  std::vector<Matrix> rs;
  for (double v : {0.3, 0.0, -0.2, 0.5}) {
    Matrix r = Matrix::Identity(2, 2);
    r(0, 1) = r(1, 0) = v;
    rs.push_back(r);
  }
  EXPECT_DOUBLE_EQ(sign_probability(rs)(0, 1), 0.75);
  rs[1](0, 1) = rs[1](1, 0) = -0.1;
  EXPECT_DOUBLE_EQ(sign_probability(rs)(0, 1), 0.5);
}

TEST(Hpd, StandardNormalMatchesKnownQuantiles) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z;
  std::vector<double> x(100000);
  for (double& v : x) v = z(rng);
  const Interval iv = hpd_interval(x, 0.95);
  EXPECT_NEAR(iv.lo, -1.959964, 0.05);
  EXPECT_NEAR(iv.hi, 1.959964, 0.05);
}

TEST(Hpd, DegenerateCases) {
  const Interval c = hpd_interval(std::vector<double>(30, 2.5), 0.9);
  EXPECT_EQ(c.lo, 2.5);
  EXPECT_EQ(c.hi, 2.5);
  std::vector<double> x;
  for (int i = 0; i < 40; ++i) x.push_back(std::sin(i));
  const Interval all = hpd_interval(x, 1.0);
  EXPECT_EQ(all.lo, *std::min_element(x.begin(), x.end()));
  EXPECT_EQ(all.hi, *std::max_element(x.begin(), x.end()));
  EXPECT_THROW(hpd_interval(std::vector<double>(19, 0.0), 0.9), InputError);
  EXPECT_THROW(hpd_interval(x, 0.0), InputError);
}

TEST(Hpd, IntervalIsNoWiderThanAnyQualifyingPair) {
  std::mt19937_64 rng(13);
  std::gamma_distribution<double> g(2.0, 1.0);
  for (int n : {20, 137, 1000}) {
    std::vector<double> x(static_cast<std::size_t>(n));
    for (double& v : x) v = g(rng);
    const double gamma = 0.8;
    const Interval iv = hpd_interval(x, gamma);
    const auto need = static_cast<long>(std::ceil(gamma * n - 1e-9));
    long inside = 0;
    for (double v : x) inside += iv.contains(v);
    EXPECT_GE(inside, need);
    // Exhaustive check over every interval with sample endpoints.
    double best = std::numeric_limits<double>::infinity();
    for (double a : x)
      for (double b : x) {
        if (b < a || b - a >= best) continue;
        long cnt = 0;
        for (double v : x) cnt += (v >= a && v <= b);
        if (cnt >= need) best = b - a;
      }
    EXPECT_DOUBLE_EQ(iv.hi - iv.lo, best) << "n=" << n;
  }
}

TEST(Hpd, ClassificationFollowsZeroExclusion) {
  std::vector<Matrix> rs;
  for (int s = 0; s < 100; ++s) {
    Matrix r = Matrix::Identity(3, 3);
    const double u = (s + 0.5) / 100.0;
    r(0, 1) = r(1, 0) = 0.2 + 0.5 * u;  // all positive
    r(0, 2) = r(2, 0) = u - 0.5;        // symmetric about zero
    r(1, 2) = r(2, 1) = -0.1 - u;       // all negative
    rs.push_back(r);
  }
  const auto h = classify_hpd(rs, 0.95);
  EXPECT_TRUE(h.selected.has_edge(0, 1));
  EXPECT_FALSE(h.selected.has_edge(0, 2));
  EXPECT_TRUE(h.selected.has_edge(1, 2));
  EXPECT_LT(h.lo(0, 2), 0.0);
  EXPECT_GT(h.hi(0, 2), 0.0);
}

TEST(Confusion, IdentityComplementAndHandFixture) {
  const auto truth = TraitGraph::from_edges(5, {{0, 1}, {1, 2}});
  const auto same = confusion_metrics(truth, truth);
  EXPECT_EQ(*same.sensitivity, 1.0);
  EXPECT_EQ(*same.specificity, 1.0);
  EXPECT_EQ(*same.precision, 1.0);
  EXPECT_EQ(*same.f1, 1.0);
  EXPECT_EQ(same.accuracy, 1.0);

  TraitGraph complement = TraitGraph::complete(5);
  for (auto [i, j] : truth.edges()) complement.set_edge(i, j, false);
  const auto inv = confusion_metrics(complement, truth);
  EXPECT_EQ(*inv.sensitivity, 0.0);
  EXPECT_EQ(*inv.specificity, 0.0);

  // 1 TP (0,1), 1 FP (3,4), 1 FN (1,2), 7 TN.
  const auto est = TraitGraph::from_edges(5, {{0, 1}, {3, 4}});
  const auto m = confusion_metrics(est, truth);
  EXPECT_EQ(m.counts.tp, 1);
  EXPECT_EQ(m.counts.fp, 1);
  EXPECT_EQ(m.counts.fn, 1);
  EXPECT_EQ(m.counts.tn, 7);
  EXPECT_DOUBLE_EQ(*m.precision, 0.5);
  EXPECT_DOUBLE_EQ(*m.sensitivity, 0.5);
  EXPECT_DOUBLE_EQ(*m.f1, 0.5);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.8);
}

TEST(Confusion, UndefinedRatesAreAbsent) {
  const auto m = confusion_metrics(TraitGraph::empty(4), TraitGraph::empty(4));
  EXPECT_FALSE(m.sensitivity.has_value());
  EXPECT_FALSE(m.precision.has_value());
  EXPECT_FALSE(m.f1.has_value());
  EXPECT_EQ(*m.specificity, 1.0);
  EXPECT_THROW(confusion_metrics(TraitGraph::empty(3), TraitGraph::empty(4)), InputError);
}

TEST(LogMse, CategoriesAndSentinels) {
  Matrix k0(3, 3);
  k0 << 2.0, -1.0, 0.0,
       -1.0, 2.0, -1.0,
        0.0, -1.0, 2.0;
  const TraitGraph g0 = TraitGraph::from_pattern(k0);
  const Matrix r0 = covariance_to_correlation(inverse_spd(k0));
  const auto cats = categorize_pairs(g0, r0);
  ASSERT_EQ(cats.size(), 3u);
  EXPECT_EQ(cats[0], PairCategory::cd_d);
  EXPECT_EQ(cats[1], PairCategory::ci_d);
  EXPECT_EQ(cats[2], PairCategory::cd_d);

  const auto exact = logmse_category(k0, k0, cats, PairCategory::cd_d);
  EXPECT_TRUE(exact.exact());
  Matrix off = k0;
  off(0, 1) += 1.0;
  off(1, 0) += 1.0;
  off(1, 2) -= 1.0;
  off(2, 1) -= 1.0;
  EXPECT_DOUBLE_EQ(logmse_category(off, k0, cats, PairCategory::cd_d).value, 0.0);
  EXPECT_THROW(logmse_category(k0, k0, cats, PairCategory::ci_i), InputError);

  const auto strat = logmse_stratified({k0, off}, k0, cats);
  EXPECT_EQ(strat.size(), 2u);
  EXPECT_TRUE(strat.at(PairCategory::cd_d)[0].exact());
  EXPECT_DOUBLE_EQ(strat.at(PairCategory::cd_d)[1].value, 0.0);
}

TEST(LogMse, RejectsDependentEdgeWithZeroCorrelation) {
  Matrix r0 = Matrix::Identity(2, 2);
  EXPECT_THROW(categorize_pairs(TraitGraph::complete(2), r0), InputError);
}

TEST(Ess, MatchesAutoregressiveTheory) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> z;
  const int n = 100000;
  std::vector<double> iid(n), ar(n);
  double prev = 0.0;
  for (int t = 0; t < n; ++t) {
    iid[t] = z(rng);
    prev = 0.5 * prev + z(rng);
    ar[t] = prev;
  }
  EXPECT_NEAR(effective_sample_size(iid) / n, 1.0, 0.1);
  // AR(1) integrated autocorrelation time is (1 + phi) / (1 - phi) = 3.
  EXPECT_NEAR(effective_sample_size(ar) / (n / 3.0), 1.0, 0.1);
}

TEST(SummaryJson, InfiniteBayesFactorsSerializeAsStrings) {
  Matrix a(2, 2);
  a << 2.0, -0.5, -0.5, 1.0;
  std::vector<std::pair<std::vector<std::uint8_t>, Matrix>> samples(25, {{1}, a});
  const auto s = summarize(make_trace(2, samples));
  const auto j = to_json(s, {"x", "y"});
  EXPECT_EQ(j["bf"][0][1], "inf");
  EXPECT_EQ(j["graph"].size(), 1u);
  EXPECT_EQ(j["graph"][0][0], 1);
  EXPECT_EQ(j["graph"][0][1], 2);
  EXPECT_DOUBLE_EQ(j["K_hat"][0][1].get<double>(), -0.5);
  EXPECT_DOUBLE_EQ(j["hpd"]["gamma"].get<double>(), 0.95);
  EXPECT_EQ(j["trait_labels"][1], "y");
}
