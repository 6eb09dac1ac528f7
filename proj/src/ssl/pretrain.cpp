#include "protofew/ssl/pretrain.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "protofew/errors.hpp"
#include "protofew/num/adam.hpp"
#include "protofew/seed.hpp"

namespace protofew::ssl {

namespace {

std::string hex(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::vector<EpochRecord> pretrain(const data::ImageDataset& dataset, Encoder<float>& encoder,
                                  const PretrainConfig& config, const EpochCallback& on_epoch) {
  if (config.epochs == 0) throw ConfigError("pretrain: epochs must be positive");
  if (config.batch_size < 2) throw ConfigError("pretrain: batch_size must be at least 2");
  if (!(config.lr >= 0)) throw ConfigError("pretrain: lr must be nonnegative");
  const std::size_t n = dataset.size();
  if (n < 2) throw ConfigError("pretrain: dataset needs at least 2 images");

  const std::size_t R = encoder.config().input_resolution;
  std::vector<data::Image> images;
  images.reserve(n);
  for (const auto& item : dataset.items()) {
    images.push_back(data::resize_bilinear(dataset.image(item), R, R));
  }

  auto params = encoder.parameters();
  num::Adam<float> adam(params, {.lr = config.lr});
  const std::size_t batch = std::min(config.batch_size, n);
  const std::size_t batches = n / batch;

  std::vector<EpochRecord> curve;
  std::vector<std::size_t> order(n);
  std::vector<data::Image> rows(batch);
  std::vector<std::size_t> ids(batch);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, {epoch, ~std::uint64_t{0}}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::uint64_t batch_seed = derive_seed(config.seed, {epoch, b});
      for (std::size_t i = 0; i < batch; ++i) {
        ids[i] = order[b * batch + i];
        rows[i] = images[ids[i]];
      }
      const ViewPair views = augment_pair(rows, ids, config.augment, config.normalization, batch_seed);
      std::vector<num::Tensor<float>> grads;
      double loss_value = 0;
      try {
        const auto fa = encoder.encode(num::Var<float>(views.x_a), Mode::Train);
        const auto fb = encoder.encode(num::Var<float>(views.x_b), Mode::Train);
        const auto loss = amdim_loss(fa, fb, config.score);
        loss_value = loss.value().item();
        grads = num::gradients<float>(loss, params);
      } catch (const NumericDomainError& e) {
        throw NumericDomainError("pretrain: non-finite value in epoch " + std::to_string(epoch) +
                                 " batch " + std::to_string(b) + " (batch seed " +
                                 hex(batch_seed) + "): " + e.what());
      }
      for (const auto& g : grads) {
        if (!g.all_finite()) {
          throw NumericDomainError("pretrain: non-finite gradient in epoch " +
                                   std::to_string(epoch) + " batch " + std::to_string(b) +
                                   " (batch seed " + hex(batch_seed) + ")");
        }
      }
      adam.step(grads);
      total += loss_value;
    }
    EpochRecord rec{epoch, total / static_cast<double>(batches), 0.0};
    if (config.record_wall_time) {
      rec.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    curve.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return curve;
}

void write_loss_csv(const std::vector<EpochRecord>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << "epoch,mean_loss,wall_seconds\n";
  char buf[96];
  for (const auto& r : curve) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.3f\n", r.epoch, r.mean_loss, r.wall_seconds);
    out << buf;
  }
  if (!out) throw IngestionError("write failed for " + path.string());
}

}  // namespace protofew::ssl
