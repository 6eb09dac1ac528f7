#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "protofew/data/synth.hpp"
#include "protofew/errors.hpp"
#include "protofew/eval/evaluate.hpp"
#include "protofew/eval/report.hpp"
#include "protofew/eval/supervised.hpp"

namespace protofew::eval {
namespace {

using num::Tensor;

constexpr std::size_t kClasses = 8;

// Class c is a solid image whose red channel encodes c.
data::ImageDataset coded_dataset(std::size_t per_class) {
  std::vector<data::ImageDataset::ClassImages> cls;
  for (std::size_t c = 0; c < kClasses; ++c) {
    data::ImageDataset::ClassImages ci{"k" + std::to_string(c), {}};
    for (std::size_t i = 0; i < per_class; ++i) {
      data::Image img(8, 8);
      for (std::size_t p = 0; p < 64; ++p) img.pixels[p] = static_cast<float>(c) / 10.f;
      ci.images.push_back(img);
    }
    cls.push_back(std::move(ci));
  }
  return data::ImageDataset::from_images("coded", std::move(cls));
}

Tensor<float> one_hot_embed(const Tensor<float>& batch) {
  const std::size_t n = batch.dim(0), per = batch.size() / n;
  Tensor<float> out({n, kClasses}, 0.f);
  for (std::size_t i = 0; i < n; ++i) {
    const float v = batch[i * per] * 0.5f + 0.5f;
    out[i * kClasses + static_cast<std::size_t>(std::lround(v * 10))] = 1.f;
  }
  return out;
}

Tensor<float> constant_embed(const Tensor<float>& batch) {
  return Tensor<float>({batch.dim(0), 4}, 0.25f);
}

TEST(EvaluateTest, PerfectEmbedderScoresOne) {
  Protocol p;
  p.episodes = 20;
  const auto r = evaluate_embedder(one_hot_embed, 8, coded_dataset(20), p);
  EXPECT_EQ(r.mean_accuracy, 1.0);
  EXPECT_EQ(r.ci95_halfwidth, 0.0);
  EXPECT_EQ(r.per_episode.size(), 20u);
  const auto table = markdown_table({{"stub", {summary_row(r)}}});
  EXPECT_NE(table.find("| stub | 100.00 ± 0.00% |"), std::string::npos) << table;
}

TEST(EvaluateTest, ConstantEmbedderScoresOneOverWay) {
  for (std::size_t way : {2u, 5u}) {
    Protocol p;
    p.way = way;
    p.episodes = 10;
    const auto r = evaluate_embedder(constant_embed, 8, coded_dataset(20), p);
    EXPECT_NEAR(r.mean_accuracy, 1.0 / static_cast<double>(way), 1e-12);
  }
}

TEST(EvaluateTest, PrototypeRefinementHookIsApplied) {
  Protocol p;
  p.episodes = 5;
  EvalOptions opts;
  std::atomic<int> calls{0};
  // Reversing the prototype order turns every correct prediction wrong.
  opts.refine_prototypes = [&](const Tensor<double>& protos, const Tensor<double>& query) {
    ++calls;
    EXPECT_EQ(query.dim(1), protos.dim(1));
    Tensor<double> out(protos.shape());
    const std::size_t K = protos.dim(0), D = protos.dim(1);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t d = 0; d < D; ++d) out[k * D + d] = protos[(K - 1 - k) * D + d];
    }
    return out;
  };
  p.way = 4;
  const auto r = evaluate_embedder(one_hot_embed, 8, coded_dataset(20), p, opts);
  EXPECT_EQ(calls.load(), 5);
  EXPECT_EQ(r.mean_accuracy, 0.0);
}

TEST(EvaluateTest, CiIsRecomputableFromEpisodes) {
  Encoder<float> enc(desk_encoder_config(), 1);
  Protocol p;
  p.episodes = 30;
  const auto r = evaluate(enc, data::synth_dataset(6, 20, 32, 3), p);
  double mean = 0;
  for (double a : r.per_episode) mean += a / 30;
  double ss = 0;
  for (double a : r.per_episode) ss += (a - mean) * (a - mean);
  EXPECT_NEAR(r.mean_accuracy, mean, 1e-12);
  EXPECT_NEAR(r.ci95_halfwidth, 1.96 * std::sqrt(ss / 29) / std::sqrt(30.0), 1e-12);
  EXPECT_EQ(ci95_halfwidth(std::vector<double>{0.4}), 0.0);
}

TEST(EvaluateTest, DeterministicAndWorkerInvariant) {
  Encoder<float> enc(desk_encoder_config(), 2);
  const auto ds = data::synth_dataset(6, 20, 32, 4);
  Protocol p;
  p.episodes = 12;
  p.seed = 5;
  EvalOptions one, four;
  one.threads = 1;
  four.threads = 4;
  const auto a = evaluate(enc, ds, p, "", one), b = evaluate(enc, ds, p, "", four);
  EXPECT_EQ(a.per_episode, b.per_episode);
  ::setenv("PROTOFEW_THREADS", "3", 1);
  EXPECT_EQ(worker_count(), 3u);
  const auto c = evaluate(enc, ds, p);
  ::unsetenv("PROTOFEW_THREADS");
  EXPECT_EQ(a.per_episode, c.per_episode);
  p.seed = 6;
  EXPECT_NE(evaluate(enc, ds, p, "", one).per_episode, a.per_episode);
}

TEST(EvaluateTest, DoesNotMutateEncoder) {
  Encoder<float> enc(desk_encoder_config(), 3);
  const auto before = parameter_checksum(enc);
  Protocol p;
  p.episodes = 4;
  evaluate(enc, data::synth_dataset(5, 20, 32, 5), p);
  EXPECT_EQ(parameter_checksum(enc), before);
}

TEST(EvaluateTest, FrozenNearestCentroidDiffersOnlyInFlag) {
  Encoder<float> enc(desk_encoder_config(), 4);
  const auto ds = data::synth_dataset(5, 20, 32, 6);
  Protocol p;
  p.episodes = 6;
  const auto a = evaluate(enc, ds, p, "abc"), b = evaluate_frozen_nn(enc, ds, p, "abc");
  EXPECT_EQ(a.per_episode, b.per_episode);
  EXPECT_EQ(a.checkpoint, b.checkpoint);
  EXPECT_EQ(a.flag, "");
  EXPECT_EQ(b.flag, "no-meta");
}

TEST(EvaluateTest, DegenerateProtocolsRejected) {
  Protocol p;
  p.way = 1;
  EXPECT_THROW(evaluate_embedder(one_hot_embed, 8, coded_dataset(20), p), ProtocolError);
  p = Protocol();
  p.episodes = 0;
  EXPECT_THROW(p.validate(), ProtocolError);
  p = Protocol();
  p.way = 9;
  EXPECT_THROW(evaluate_embedder(one_hot_embed, 8, coded_dataset(20), p), ProtocolError);
}

TEST(CrossDomainTest, ProtocolsAndSingleCellSummary) {
  const auto protos = cross_domain_protocols(600, 0, 15);
  ASSERT_EQ(protos.size(), 3u);
  EXPECT_EQ(protos[0].name(), "5w5s");
  EXPECT_EQ(protos[1].name(), "5w20s");
  EXPECT_EQ(protos[2].name(), "5w50s");

  Encoder<float> enc(desk_encoder_config(), 5);
  std::vector<data::ImageDataset> targets{data::synth_dataset(5, 20, 32, 7)};
  Protocol p = protos[0];
  p.episodes = 5;
  const std::vector<Protocol> one{p};
  const auto r = cross_domain_evaluate(enc, targets, one);
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_EQ(r.grand_mean, r.cells[0].mean_accuracy);
}

TEST(CrossDomainTest, FiftyShotNeedsSixtyFivePerClass) {
  Encoder<float> enc(desk_encoder_config(), 6);
  std::vector<data::ImageDataset> short_targets{data::synth_dataset(5, 60, 32, 8)};
  Protocol p = cross_domain_protocols(2)[2];
  const std::vector<Protocol> one{p};
  EXPECT_THROW(cross_domain_evaluate(enc, short_targets, one), ProtocolError);
  p.queries = 10;
  const std::vector<Protocol> fewer{p};
  EXPECT_NO_THROW(cross_domain_evaluate(enc, short_targets, fewer));
}

TEST(SupervisedTest, ZeroLearningRateKeepsParameters) {
  Encoder<float> enc(desk_encoder_config(), 7);
  std::vector<Tensor<float>> before;
  for (const auto& p : enc.parameters()) before.push_back(p.value());
  SupervisedConfig cfg;
  cfg.epochs = 1;
  cfg.lr = 0;
  cfg.batch_size = 8;
  supervised_train(enc, data::synth_dataset(4, 4, 32, 9), cfg);
  const auto after = enc.parameters();
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(after[i].value(), before[i]);
}

TEST(SupervisedTest, LearnsAboveChance) {
  SupervisedConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 16;
  cfg.lr = 1e-3;
  std::vector<SupervisedEpoch> curve;
  supervised_baseline(data::synth_dataset(5, 16, 32, 10), desk_encoder_config(), cfg, 1, &curve);
  ASSERT_EQ(curve.size(), 4u);
  EXPECT_GT(curve.back().train_accuracy, 2.0 / 5.0);
}

TEST(SupervisedTest, EncoderEvaluatesUnderEveryProtocol) {
  SupervisedConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  auto enc = supervised_baseline(data::synth_dataset(5, 8, 32, 12), desk_encoder_config(), cfg, 2);
  const auto target = data::synth_dataset(5, 65, 32, 13);
  std::vector<Protocol> protos = cross_domain_protocols(2);
  for (std::size_t shot : {1u, 5u}) {
    Protocol p;
    p.shot = shot;
    p.episodes = 2;
    protos.push_back(p);
  }
  for (const auto& p : protos) {
    const auto r = evaluate(enc, target, p);
    EXPECT_GE(r.mean_accuracy, 0.0) << p.name();
    EXPECT_LE(r.mean_accuracy, 1.0) << p.name();
  }
}

SummaryRow cell(std::string ds, std::string proto, double mean, double ci) {
  SummaryRow r;
  r.dataset = std::move(ds);
  r.protocol = std::move(proto);
  r.mean = mean;
  r.ci95 = ci;
  r.episodes = 600;
  return r;
}

TEST(ReportTest, CellFormatting) {
  EXPECT_EQ(format_cell(0.6403, 0.0020), "64.03 ± 0.20%");
  EXPECT_EQ(format_cell(1.0, 0.0), "100.00 ± 0.00%");
  EXPECT_EQ(format_cell(0.2, 0.0123), "20.00 ± 1.23%");
}

TEST(ReportTest, MissingCellsUseDashAndColumnsAreUnion) {
  const std::vector<TableRow> rows{{"A", {cell("d", "5w1s", 0.5, 0.01)}},
                                   {"B", {cell("d", "5w5s", 0.7, 0.02)}}};
  const auto t = markdown_table(rows);
  EXPECT_EQ(t,
            "| Method | d 5w1s | d 5w5s |\n|---|---|---|\n"
            "| A | 50.00 ± 1.00% | — |\n| B | — | 70.00 ± 2.00% |\n");
}

TEST(ReportTest, ColumnsIndependentOfInputOrder) {
  const auto a = cell("x", "5w20s", 0.4, 0.01), b = cell("x", "5w5s", 0.6, 0.01),
             c = cell("w", "5w50s", 0.8, 0.01);
  const auto t1 = markdown_table({{"M", {a, b, c}}}, true);
  const auto t2 = markdown_table({{"M", {c, a, b}}}, true);
  EXPECT_EQ(t1, t2);
  EXPECT_NE(t1.find("| Method | w 5w50s | x 5w5s | x 5w20s | Average |"), std::string::npos) << t1;
  EXPECT_NE(t1.find("60.00%"), std::string::npos);
}

TEST(ReportTest, SummaryCsvRoundTrip) {
  EvalReport r;
  r.mean_accuracy = 0.123456789012345;
  r.ci95_halfwidth = 0.0101;
  r.episodes = 600;
  r.protocol.shot = 5;
  r.protocol.seed = 17;
  r.dataset = "synth_test";
  r.checkpoint = "00ff00ff00ff00ff";
  const auto path = std::filesystem::temp_directory_path() / "protofew_summary_test.csv";
  write_summary_csv({r}, path);
  const auto back = read_summary_csv(path);
  ASSERT_EQ(back.size(), 1u);
  const auto expect = summary_row(r);
  EXPECT_EQ(back[0].dataset, expect.dataset);
  EXPECT_EQ(back[0].protocol, "5w5s");
  EXPECT_EQ(back[0].mean, expect.mean);
  EXPECT_EQ(back[0].ci95, expect.ci95);
  EXPECT_EQ(back[0].seed, 17u);
  EXPECT_EQ(back[0].checkpoint, expect.checkpoint);
  std::filesystem::remove(path);
}

TEST(ReportTest, MalformedSummaryNamesLine) {
  const auto path = std::filesystem::temp_directory_path() / "protofew_bad_summary.csv";
  {
    std::ofstream out(path);
    out << "dataset,protocol,mean,ci95,episodes,seed,checkpoint\nd,5w1s,notanumber,0,1,0,x\n";
  }
  try {
    read_summary_csv(path);
    FAIL() << "expected IngestionError";
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace protofew::eval
