#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "grad_check_util.hpp"
#include "protofew/data/synth.hpp"
#include "protofew/errors.hpp"
#include "protofew/meta/episode.hpp"
#include "protofew/meta/meta_train.hpp"
#include "protofew/meta/prototypes.hpp"

namespace protofew::meta {
namespace {

using num::Tensor;
using num::Var;
using testing::random_tensor;

data::ImageDataset tiny_dataset(std::size_t classes, std::size_t per_class) {
  std::vector<data::ImageDataset::ClassImages> cls;
  for (std::size_t c = 0; c < classes; ++c) {
    data::ImageDataset::ClassImages ci{"c" + std::to_string(c), {}};
    for (std::size_t i = 0; i < per_class; ++i) ci.images.emplace_back(1, 1);
    cls.push_back(std::move(ci));
  }
  return data::ImageDataset::from_images("tiny", std::move(cls));
}

Var<double> rows(std::initializer_list<std::initializer_list<double>> r) {
  const std::size_t n = r.size(), d = r.begin()->size();
  Tensor<double> t({n, d});
  std::size_t k = 0;
  for (const auto& row : r) {
    for (double v : row) t[k++] = v;
  }
  return Var<double>(t);
}

TEST(EpisodeTest, ExhaustiveEpisodeUsesWholeDataset) {
  const auto ds = tiny_dataset(2, 2);
  std::mt19937_64 rng(1);
  const auto ep = sample_episode(ds, 2, 1, 1, rng);
  std::set<data::ItemRef> seen;
  for (const auto& e : ep.support) seen.insert(e.item);
  for (const auto& e : ep.query) seen.insert(e.item);
  EXPECT_EQ(seen.size(), 4u);
  EXPECT_EQ(ep.support_labels(), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(ep.query_labels(), (std::vector<std::size_t>{0, 1}));
}

TEST(EpisodeTest, FixedSeedGivesSameEpisode) {
  const auto ds = tiny_dataset(10, 8);
  std::mt19937_64 a(5), b(5);
  const auto ea = sample_episode(ds, 5, 2, 3, a), eb = sample_episode(ds, 5, 2, 3, b);
  EXPECT_EQ(ea.class_map, eb.class_map);
  for (std::size_t i = 0; i < ea.support.size(); ++i) EXPECT_EQ(ea.support[i].item, eb.support[i].item);
  for (std::size_t i = 0; i < ea.query.size(); ++i) EXPECT_EQ(ea.query[i].item, eb.query[i].item);
}

TEST(EpisodeTest, StructuralInvariantsOverManyDraws) {
  const auto ds = tiny_dataset(12, 9);
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100000; ++t) {
    const auto ep = sample_episode(ds, 4, 2, 3, rng);
    ASSERT_EQ(ep.support.size(), 8u);
    ASSERT_EQ(ep.query.size(), 12u);
    ASSERT_EQ(std::set<std::size_t>(ep.class_map.begin(), ep.class_map.end()).size(), 4u);
    std::set<data::ItemRef> items;
    for (std::size_t i = 0; i < ep.support.size(); ++i) {
      const auto& e = ep.support[i];
      ASSERT_EQ(e.label, i / 2);
      ASSERT_EQ(e.item.cls, ep.class_map[e.label]);
      items.insert(e.item);
    }
    for (std::size_t i = 0; i < ep.query.size(); ++i) {
      const auto& e = ep.query[i];
      ASSERT_EQ(e.label, i / 3);
      ASSERT_EQ(e.item.cls, ep.class_map[e.label]);
      items.insert(e.item);
    }
    ASSERT_EQ(items.size(), 20u) << "support and query overlap at draw " << t;
  }
}

TEST(EpisodeTest, ClassFrequenciesAreUniform) {
  const auto ds = tiny_dataset(20, 2);
  std::mt19937_64 rng(3);
  std::vector<double> count(20, 0);
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) {
    for (std::size_t c : sample_episode(ds, 5, 1, 1, rng).class_map) count[c] += 1;
  }
  const double expected = draws * 5.0 / 20.0;
  double chi2 = 0;
  for (double c : count) chi2 += (c - expected) * (c - expected) / expected;
  // 19 degrees of freedom, upper 1% point.
  EXPECT_LT(chi2, 36.19);
}

TEST(EpisodeTest, InfeasibleRequestNamesDeficit) {
  const auto ds = tiny_dataset(6, 60);
  try {
    check_feasible(ds, 5, 50, 15);
    FAIL() << "expected ProtocolError";
  } catch (const ProtocolError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("65"), std::string::npos) << msg;
    EXPECT_NE(msg.find("60"), std::string::npos) << msg;
    EXPECT_NE(msg.find("5 short"), std::string::npos) << msg;
  }
  EXPECT_THROW(check_feasible(ds, 7, 1, 1), ProtocolError);
  EXPECT_NO_THROW(check_feasible(ds, 5, 45, 15));
  std::mt19937_64 rng(0);
  EXPECT_THROW(sample_episode(ds, 5, 50, 15, rng), ProtocolError);
}

TEST(PrototypeTest, MeansOfLabelledRows) {
  const auto s = rows({{1, 0}, {3, 0}, {0, 2}, {0, 4}});
  const std::vector<std::size_t> labels{0, 0, 1, 1};
  const auto p = compute_prototypes(s, labels, 2).prototypes.value();
  EXPECT_EQ(p[0], 2);
  EXPECT_EQ(p[1], 0);
  EXPECT_EQ(p[2], 0);
  EXPECT_EQ(p[3], 3);
}

TEST(PrototypeTest, OneShotPrototypesAreTheSupport) {
  std::mt19937_64 rng(4);
  const auto s = random_tensor({3, 5}, rng);
  const std::vector<std::size_t> labels{2, 0, 1};
  const auto p = compute_prototypes(Var<double>(s), labels, 3).prototypes.value();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t d = 0; d < 5; ++d) EXPECT_DOUBLE_EQ(p[labels[i] * 5 + d], s[i * 5 + d]);
  }
}

TEST(PrototypeTest, MatchesLoopOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_tensor({12, 6}, rng);
    std::vector<std::size_t> labels(12);
    for (std::size_t i = 0; i < 12; ++i) labels[i] = (i * 7 + trial) % 4;
    const auto p = compute_prototypes(Var<double>(s), labels, 4).prototypes.value();
    for (std::size_t k = 0; k < 4; ++k) {
      for (std::size_t d = 0; d < 6; ++d) {
        double sum = 0, n = 0;
        for (std::size_t i = 0; i < 12; ++i) {
          if (labels[i] == k) sum += s[i * 6 + d], n += 1;
        }
        EXPECT_NEAR(p[k * 6 + d], sum / n, 1e-12);
      }
    }
  }
}

TEST(PrototypeTest, TranslationMovesPrototypes) {
  std::mt19937_64 rng(6);
  const auto s = random_tensor({6, 3}, rng), shift = random_tensor({1, 3}, rng);
  auto moved = s;
  for (std::size_t i = 0; i < moved.size(); ++i) moved[i] += shift[i % 3];
  const std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2};
  const auto p = compute_prototypes(Var<double>(s), labels, 3).prototypes.value();
  const auto q = compute_prototypes(Var<double>(moved), labels, 3).prototypes.value();
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(q[i], p[i] + shift[i % 3], 1e-12);
}

TEST(PrototypeTest, EmptyClassAndBadLabelRejected) {
  const auto s = rows({{1, 0}, {3, 0}});
  const std::vector<std::size_t> missing{0, 0}, bad{0, 2};
  EXPECT_THROW(compute_prototypes(s, missing, 2), ContractViolation);
  EXPECT_THROW(compute_prototypes(s, bad, 2), ContractViolation);
}

TEST(ClassifyTest, TwoPrototypeExample) {
  const auto protos = compute_prototypes(rows({{0, 0}, {1, 0}}), std::vector<std::size_t>{0, 1}, 2);
  const auto p = classify_query(rows({{0, 0}}), protos).value();
  EXPECT_NEAR(p[0], 0.7310585786300049, 1e-12);
  EXPECT_NEAR(p[1], 0.2689414213699951, 1e-12);
}

TEST(ClassifyTest, FarQuerySaturatesWithoutNan) {
  const auto protos = compute_prototypes(rows({{0, 0}, {10, 0}}), std::vector<std::size_t>{0, 1}, 2);
  const auto p = classify_query(rows({{-100, 0}}), protos).value();
  EXPECT_TRUE(std::isfinite(p[0]) && std::isfinite(p[1]));
  EXPECT_NEAR(p[0], 1.0, 1e-12);
  EXPECT_GE(p[1], 0.0);
}

TEST(ClassifyTest, EquidistantQueryIsUniformAndTiesPickLowest) {
  const auto protos =
      compute_prototypes(rows({{1, 0}, {-1, 0}, {0, 1}}), std::vector<std::size_t>{0, 1, 2}, 3);
  const auto p = classify_query(rows({{0, 0}}), protos).value();
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(p[k], 1.0 / 3, 1e-12);
  const auto d = prototype_distances(rows({{0, 0}}), protos).value();
  EXPECT_EQ(nearest_prototype(d), std::vector<std::size_t>{0});
  EXPECT_EQ(argmax_rows(p), std::vector<std::size_t>{0});
}

TEST(ClassifyTest, PropertiesOverRandomInputs) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_tensor({5, 4}, rng, -3, 3), q = random_tensor({7, 4}, rng, -3, 3);
    const std::vector<std::size_t> labels{0, 1, 2, 3, 4};
    const auto protos = compute_prototypes(Var<double>(s), labels, 5);
    const auto p = classify_query(Var<double>(q), protos).value();
    for (std::size_t i = 0; i < 7; ++i) {
      double sum = 0;
      for (std::size_t k = 0; k < 5; ++k) {
        ASSERT_GE(p[i * 5 + k], 0.0);
        ASSERT_LE(p[i * 5 + k], 1.0);
        sum += p[i * 5 + k];
      }
      ASSERT_NEAR(sum, 1.0, 1e-9);
    }
    // Shifting support and queries together leaves the posterior unchanged.
    const auto shift = random_tensor({1, 4}, rng, -5, 5);
    auto s2 = s, q2 = q;
    for (std::size_t i = 0; i < s2.size(); ++i) s2[i] += shift[i % 4];
    for (std::size_t i = 0; i < q2.size(); ++i) q2[i] += shift[i % 4];
    const auto p2 = classify_query(Var<double>(q2), compute_prototypes(Var<double>(s2), labels, 5)).value();
    for (std::size_t i = 0; i < p.size(); ++i) ASSERT_NEAR(p2[i], p[i], 1e-9);
    // Scaling by alpha scales squared distances by alpha^2.
    const double alpha = 0.5;
    auto s3 = s, q3 = q;
    for (auto& v : s3.data()) v *= alpha;
    for (auto& v : q3.data()) v *= alpha;
    const auto d = prototype_distances(Var<double>(q), protos).value();
    const auto d3 =
        prototype_distances(Var<double>(q3), compute_prototypes(Var<double>(s3), labels, 5)).value();
    for (std::size_t i = 0; i < d.size(); ++i) ASSERT_EQ(d3[i], alpha * alpha * d[i]);
  }
}

TEST(ClassifyTest, EuclideanIsRootOfSquared) {
  std::mt19937_64 rng(8);
  const auto s = random_tensor({3, 4}, rng), q = random_tensor({5, 4}, rng);
  const auto protos = compute_prototypes(Var<double>(s), std::vector<std::size_t>{0, 1, 2}, 3);
  const auto sq = prototype_distances(Var<double>(q), protos).value();
  const auto eu = prototype_distances(Var<double>(q), protos, Distance::Euclidean).value();
  for (std::size_t i = 0; i < sq.size(); ++i) EXPECT_NEAR(eu[i], std::sqrt(sq[i]), 1e-6);
}

TEST(MetaLossTest, TwoPrototypeExamples) {
  const auto protos = compute_prototypes(rows({{0, 0}, {1, 0}}), std::vector<std::size_t>{0, 1}, 2);
  const std::vector<std::size_t> y0{0}, y1{1};
  EXPECT_NEAR(meta_loss(rows({{0, 0}}), y0, protos).value().item(), -std::log(0.7310585786300049), 1e-12);
  EXPECT_NEAR(meta_loss(rows({{0, 0}}), y1, protos).value().item(), -std::log(0.2689414213699951), 1e-12);
}

TEST(MetaLossTest, EqualsNegativeLogPosterior) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = random_tensor({4, 3}, rng, -2, 2), q = random_tensor({6, 3}, rng, -2, 2);
    const std::vector<std::size_t> labels{0, 1, 2, 3}, y{0, 1, 2, 3, 1, 2};
    const auto protos = compute_prototypes(Var<double>(s), labels, 4);
    for (auto dist : {Distance::SquaredEuclidean, Distance::Euclidean}) {
      const auto p = classify_query(Var<double>(q), protos, dist).value();
      double ref = 0;
      for (std::size_t i = 0; i < 6; ++i) ref -= std::log(p[i * 4 + y[i]]) / 6;
      EXPECT_NEAR(meta_loss(Var<double>(q), y, protos, dist).value().item(), ref, 1e-7);
    }
  }
}

TEST(MetaLossTest, GradientThroughSupportAndQuery) {
  std::mt19937_64 rng(10);
  const std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2}, y{2, 0, 1, 1};
  for (int trial = 0; trial < 5; ++trial) {
    const auto s = random_tensor({6, 4}, rng), q = random_tensor({4, 4}, rng);
    const double err = testing::max_grad_error(
        [&](auto& v) { return meta_loss(v[1], y, compute_prototypes(v[0], labels, 3)); }, {s, q});
    EXPECT_LE(err, 1e-5);
  }
}

TEST(MetaLossTest, LabelOutOfRangeRejected) {
  const auto protos = compute_prototypes(rows({{0, 0}, {1, 0}}), std::vector<std::size_t>{0, 1}, 2);
  const std::vector<std::size_t> y{2};
  EXPECT_THROW(meta_loss(rows({{0, 0}}), y, protos), ContractViolation);
}

data::ImageDataset blobs() { return data::synth_dataset(10, 20, 32, 31); }

TEST(MetaTrainTest, ZeroLearningRateLeavesEncoderUnchanged) {
  Encoder<float> enc(desk_encoder_config(), 1);
  const auto before = enc.state();
  MetaTrainConfig cfg;
  cfg.episodes = 3;
  cfg.lr = 0;
  meta_train(enc, blobs(), cfg);
  EXPECT_EQ(enc.state(), before);
}

TEST(MetaTrainTest, FixedSeedIsDeterministic) {
  const auto ds = blobs();
  MetaTrainConfig cfg;
  cfg.episodes = 4;
  cfg.seed = 9;
  Encoder<float> a(desk_encoder_config(), 2), b(desk_encoder_config(), 2);
  const auto la = meta_train(a, ds, cfg), lb = meta_train(b, ds, cfg);
  for (std::size_t i = 0; i < la.size(); ++i) {
    EXPECT_EQ(la[i].loss, lb[i].loss);
    EXPECT_EQ(la[i].accuracy, lb[i].accuracy);
  }
  EXPECT_EQ(a.state(), b.state());
}

TEST(MetaTrainTest, UpdatesOnlyWeightsNotBatchNorm) {
  Encoder<float> enc(desk_encoder_config(), 3);
  const auto before = enc.state();
  MetaTrainConfig cfg;
  cfg.episodes = 2;
  cfg.lr = 1e-3;
  meta_train(enc, blobs(), cfg);
  const auto after = enc.state();
  bool weights_moved = false;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const bool bn = before[i].name.find("bn") != std::string::npos;
    if (bn) {
      EXPECT_EQ(after[i].tensor, before[i].tensor) << before[i].name;
    } else if (after[i].tensor != before[i].tensor) {
      weights_moved = true;
    }
  }
  EXPECT_TRUE(weights_moved);
}

TEST(MetaTrainTest, EpisodeAccuracyImproves) {
  Encoder<float> enc(desk_encoder_config(), 4);
  MetaTrainConfig cfg;
  cfg.episodes = 500;
  cfg.seed = 1;
  const auto log = meta_train(enc, data::synth_dataset(20, 30, 32, 41), cfg);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    first += log[i].accuracy / 100;
    last += log[log.size() - 100 + i].accuracy / 100;
  }
  EXPECT_GE(last - first, 0.10) << "first " << first << " last " << last;
}

TEST(MetaTrainTest, InfeasibleProtocolRejected) {
  Encoder<float> enc(desk_encoder_config(), 5);
  MetaTrainConfig cfg;
  cfg.shot = 10;
  cfg.queries = 15;
  EXPECT_THROW(meta_train(enc, blobs(), cfg), ProtocolError);
}

}  // namespace
}  // namespace protofew::meta
