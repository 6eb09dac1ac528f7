#include "protofew/eval/supervised.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "protofew/errors.hpp"
#include "protofew/meta/prototypes.hpp"
#include "protofew/num/adam.hpp"
#include "protofew/seed.hpp"

namespace protofew::eval {

std::vector<SupervisedEpoch> supervised_train(Encoder<float>& encoder,
                                              const data::ImageDataset& dataset,
                                              const SupervisedConfig& config) {
  if (config.epochs == 0) throw ConfigError("supervised: epochs must be positive");
  if (config.batch_size < 2) throw ConfigError("supervised: batch_size must be at least 2");
  if (!(config.lr >= 0)) throw ConfigError("supervised: lr must be nonnegative");
  const std::size_t n = dataset.size(), classes = dataset.num_classes();
  if (n < 2 || classes < 2) throw ConfigError("supervised: need at least 2 images and 2 classes");

  const std::size_t R = encoder.config().input_resolution, D = encoder.config().nrkhs;
  std::vector<data::Image> images;
  std::vector<std::size_t> labels;
  for (const auto& item : dataset.items()) {
    images.push_back(data::resize_bilinear(dataset.image(item), R, R));
    labels.push_back(item.cls);
  }

  std::mt19937_64 init(derive_seed(config.seed, {0x4eadULL}));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(D)));
  num::Tensor<float> w({classes, D});
  for (auto& v : w.data()) v = static_cast<float>(normal(init));
  num::Var<float> head_w(std::move(w), true);
  num::Var<float> head_b(num::Tensor<float>({classes}, 0.f), true);

  auto params = encoder.parameters();
  params.push_back(head_w);
  params.push_back(head_b);
  num::Adam<float> adam(params, {.lr = config.lr});

  const std::size_t batch = std::min(config.batch_size, n), batches = n / batch;
  std::vector<std::size_t> order(n);
  std::vector<SupervisedEpoch> curve;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, {epoch, ~std::uint64_t{0}}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::uint64_t batch_seed = derive_seed(config.seed, {epoch, b});
      num::Tensor<float> x({batch, 3, R, R});
      std::vector<std::size_t> y(batch);
      const std::size_t per = 3 * R * R;
      for (std::size_t i = 0; i < batch; ++i) {
        const std::size_t id = order[b * batch + i];
        std::mt19937_64 rng(derive_seed(batch_seed, {i}));
        const auto t = data::preprocess(ssl::augment_image(images[id], config.augment, rng), R,
                                        config.normalization);
        std::copy(t.data().begin(), t.data().end(), x.raw() + i * per);
        y[i] = labels[id];
      }
      const auto g = encoder.embed(num::Var<float>(std::move(x)), Mode::Train);
      const auto logits = num::linear(g, head_w, head_b);
      const auto loss = num::mean(num::sub(num::log_sum_exp(logits, 1), num::pick(logits, y)));
      const auto pred = meta::argmax_rows(logits.value());
      for (std::size_t i = 0; i < batch; ++i) correct += pred[i] == y[i];
      total += loss.value().item();
      adam.step(num::gradients<float>(loss, params));
    }
    curve.push_back({epoch, total / static_cast<double>(batches),
                     static_cast<double>(correct) / static_cast<double>(batches * batch)});
  }
  return curve;
}

Encoder<float> supervised_baseline(const data::ImageDataset& dataset,
                                   const EncoderConfig& encoder_config,
                                   const SupervisedConfig& config, std::uint64_t init_seed,
                                   std::vector<SupervisedEpoch>* curve) {
  Encoder<float> encoder(encoder_config, init_seed);
  auto c = supervised_train(encoder, dataset, config);
  if (curve) *curve = std::move(c);
  return encoder;
}

}  // namespace protofew::eval
