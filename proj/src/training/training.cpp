#include "hgtnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

#include "hgtnet/dataset.hpp"
#include "hgtnet/errors.hpp"
#include "hgtnet/io.hpp"
#include "hgtnet/ops.hpp"

namespace hgt::train {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must be in (0, 1)");
  if (eval_threads < 1) throw ConfigError("eval_threads must be at least 1");
}

// ---- losses ----

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy expects B x K logits, got " + shape_str(logits.shape()));
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  if (labels.size() != b) throw DimensionError("cross_entropy: label count does not match batch");
  if (b == 0 || k == 0) throw DimensionError("cross_entropy: empty logits");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k)
      throw ContractError("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
  }
  const auto x = logits.data();
  std::vector<double> probs(b * k);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = x.data() + i * k;
    const double m = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(row[j] - lse);
    total += lse - row[labels[i]];
  }
  std::vector<int> y(labels.begin(), labels.end());
  return Tensor::make_result({}, {total / static_cast<double>(b)}, {logits}, "cross_entropy",
                             [logits, probs = std::move(probs), y = std::move(y), b, k](std::span<const double> g) {
                               auto gx = logits.grad_sink();
                               if (gx.empty()) return;
                               const double s = g[0] / static_cast<double>(b);
                               for (std::size_t i = 0; i < b; ++i) {
                                 for (std::size_t j = 0; j < k; ++j) {
                                   const double target = static_cast<int>(j) == y[i] ? 1.0 : 0.0;
                                   gx[i * k + j] += s * (probs[i * k + j] - target);
                                 }
                               }
                             });
}

Tensor combined_loss(const Tensor& class_logits, std::span<const int> labels, const Tensor& rot_logits,
                     std::span<const int> rot_labels, double lambda) {
  if (!(lambda >= 0.0)) throw ContractError("rotation loss weight must be non-negative");
  Tensor ce = cross_entropy(class_logits, labels);
  if (lambda == 0.0) return ce;
  return add(ce, scale(cross_entropy(rot_logits, rot_labels), lambda));
}

// ---- optimizer ----

AdamState AdamState::zeros_like(const model::Parameters& params) {
  AdamState s;
  for (const auto& [name, t] : params) {
    s.m.emplace_back(t.numel(), 0.0);
    s.v.emplace_back(t.numel(), 0.0);
  }
  return s;
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::uint64_t t, const TrainConfig& cfg) {
  if (t < 1) throw ContractError("adam step count must start at 1");
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size())
    throw ContractError("adam: parameter, gradient and moment sizes differ");
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
    v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    param[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
}

void adam_step(model::Parameters& params, AdamState& state, const TrainConfig& cfg) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ContractError("adam: optimizer state does not match the parameter list");
  ++state.step;
  std::size_t i = 0;
  for (auto& [name, t] : params) {
    const std::vector<double> g = t.grad();
    adam_update(t.mutable_data(), g, state.m[i], state.v[i], state.step, cfg);
    ++i;
  }
}

// ---- early stopping ----

EarlyStopping::EarlyStopping(std::size_t patience)
    : patience_(patience), best_loss_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw ConfigError("patience must be at least 1");
}

StopDecision EarlyStopping::observe(double test_loss) {
  ++observed_;
  if (test_loss < best_loss_) {
    best_loss_ = test_loss;
    best_epoch_ = observed_ - 1;
    counter_ = 0;
    improved_last_ = true;
  } else {
    ++counter_;
    improved_last_ = false;
  }
  return counter_ >= patience_ ? StopDecision::kStop : StopDecision::kContinue;
}

void EarlyStopping::restore(double best_loss, std::size_t best_epoch, std::size_t counter, std::size_t observed) {
  best_loss_ = best_loss;
  best_epoch_ = best_epoch;
  counter_ = counter;
  observed_ = observed;
  improved_last_ = false;
}

StopDecision early_stopping_check(std::span<const double> test_losses, std::size_t patience) {
  EarlyStopping es(patience);
  for (double l : test_losses) {
    if (es.observe(l) == StopDecision::kStop) return StopDecision::kStop;
  }
  return StopDecision::kContinue;
}

// ---- batches ----

std::vector<std::size_t> batch_sizes(std::size_t n, std::size_t batch_size) {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  std::vector<std::size_t> out;
  for (std::size_t start = 0; start < n; start += batch_size) out.push_back(std::min(batch_size, n - start));
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  RngStream rng = RngStream(seed, stream_key("shuffle")).child(epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

Batch make_train_batch(std::span<const data::ImageSample* const> samples, const data::AugmentPolicy& policy,
                       const data::DatasetStats& stats, std::uint64_t seed, std::uint64_t epoch, bool pretext) {
  const std::size_t b = samples.size();
  const std::size_t h = policy.target_h, w = policy.target_w;
  const std::size_t per = 3 * h * w;
  std::vector<double> buf((pretext ? 2 * b : b) * per);
  Batch out;
  out.labels.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    const data::ImageSample& s = *samples[i];
    const RngStream rng = data::sample_stream(seed, s.id, epoch);
    const data::Image view = data::augment(s.image, policy, rng.child("augment"));
    data::normalize_into(view, stats, std::span<double>(buf).subspan(i * per, per));
    out.labels.push_back(s.label);
    if (pretext) {
      auto [rotated, k] = data::rotation_pretext_sample(view, rng.child("pretext"));
      data::normalize_into(rotated, stats, std::span<double>(buf).subspan((b + i) * per, per));
      out.rot_labels.push_back(k);
    }
  }
  out.images = Tensor::from_data({pretext ? 2 * b : b, 3, h, w}, std::move(buf));
  return out;
}

Tensor make_eval_batch(std::span<const data::ImageSample* const> samples, std::size_t size,
                       const data::DatasetStats& stats) {
  const std::size_t per = 3 * size * size;
  std::vector<double> buf(samples.size() * per);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const data::Image& img = samples[i]->image;
    std::span<double> dst = std::span<double>(buf).subspan(i * per, per);
    if (img.height == size && img.width == size) {
      data::normalize_into(img, stats, dst);
    } else {
      data::normalize_into(data::resize_bilinear(img, size, size), stats, dst);
    }
  }
  return Tensor::from_data({samples.size(), 3, size, size}, std::move(buf));
}

// ---- loops ----

namespace {

std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
  const std::size_t k = logits.dim(1);
  const auto x = logits.data();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (metrics::predicted_label(x.subspan(i * k, k)) == static_cast<std::size_t>(labels[i])) ++correct;
  }
  return correct;
}

}  // namespace

StepResult train_step(model::HGTNet& net, AdamState& state, const TrainConfig& cfg, const Batch& batch,
                      const RngStream& dropout_rng) {
  const model::ForwardContext ctx{true, dropout_rng, nullptr};
  const model::ModelOutput out = net.forward(batch.images, ctx);
  const std::size_t b = batch.labels.size();
  Tensor loss;
  Tensor class_logits = out.class_logits;
  if (batch.rot_labels.empty()) {
    loss = cross_entropy(class_logits, batch.labels);
  } else {
    class_logits = narrow_first(out.class_logits, 0, b);
    const Tensor rot_logits = narrow_first(out.rot_logits, b, b);
    loss = combined_loss(class_logits, batch.labels, rot_logits, batch.rot_labels,
                         net.config().rotation_loss_weight);
  }
  net.params().zero_grad();
  loss.backward();
  adam_step(net.params(), state, cfg);
  return {loss.item(), count_correct(class_logits, batch.labels)};
}

EpochStats train_epoch(model::HGTNet& net, std::span<const data::ImageSample> train, const data::AugmentPolicy& policy,
                       const data::DatasetStats& stats, AdamState& state, const TrainConfig& cfg, std::uint64_t epoch) {
  if (train.empty()) throw DatasetError("training split is empty");
  const std::vector<std::size_t> order = epoch_order(train.size(), cfg.seed, epoch);
  const bool pretext = net.config().rotation_loss_weight > 0.0;
  const RngStream dropout_root = RngStream(cfg.seed, stream_key("dropout")).child(epoch);

  EpochStats stats_out;
  double loss_sum = 0.0;
  std::size_t correct = 0, start = 0;
  std::vector<const data::ImageSample*> ptrs;
  for (std::size_t len : batch_sizes(train.size(), cfg.batch_size)) {
    ptrs.clear();
    for (std::size_t i = start; i < start + len; ++i) ptrs.push_back(&train[order[i]]);
    const Batch batch = make_train_batch(ptrs, policy, stats, cfg.seed, epoch, pretext);
    const StepResult r = train_step(net, state, cfg, batch, dropout_root.child(stats_out.batches));
    loss_sum += r.loss * static_cast<double>(len);
    correct += r.correct;
    start += len;
    ++stats_out.batches;
  }
  stats_out.loss = loss_sum / static_cast<double>(train.size());
  stats_out.accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
  return stats_out;
}

EvalResult evaluate(const model::HGTNet& net, std::span<const data::ImageSample> samples,
                    const data::DatasetStats& stats, std::size_t batch_size, std::size_t threads) {
  EvalResult result;
  const std::size_t n = samples.size();
  if (n == 0) return result;
  const std::size_t k = net.config().num_classes;
  const std::size_t size = net.config().image_size;
  const std::vector<std::size_t> sizes = batch_sizes(n, batch_size);
  std::vector<std::size_t> starts(sizes.size());
  for (std::size_t b = 1; b < sizes.size(); ++b) starts[b] = starts[b - 1] + sizes[b - 1];

  result.records.resize(n);
  std::vector<double> losses(n);
  const auto run_batch = [&](std::size_t b) {
    std::vector<const data::ImageSample*> ptrs;
    for (std::size_t i = starts[b]; i < starts[b] + sizes[b]; ++i) ptrs.push_back(&samples[i]);
    const Tensor x = make_eval_batch(ptrs, size, stats);
    const model::ModelOutput out = net.forward(x, model::ForwardContext{});
    const auto logits = out.class_logits.data();
    for (std::size_t r = 0; r < sizes[b]; ++r) {
      const std::size_t i = starts[b] + r;
      const double* row = logits.data() + r * k;
      const double m = *std::max_element(row, row + k);
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - m);
      const double lse = m + std::log(s);
      metrics::PredictionRecord& rec = result.records[i];
      rec.sample_id = samples[i].id;
      rec.true_label = samples[i].label;
      rec.scores.resize(k);
      for (std::size_t j = 0; j < k; ++j) rec.scores[j] = std::exp(row[j] - lse);
      if (samples[i].label < 0 || static_cast<std::size_t>(samples[i].label) >= k)
        throw ContractError("evaluate: label outside the model's class range");
      losses[i] = lse - row[samples[i].label];
    }
  };

  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), sizes.size());
  if (workers == 1) {
    NoGradGuard no_grad;
    for (std::size_t b = 0; b < sizes.size(); ++b) run_batch(b);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        try {
          NoGradGuard no_grad;
          for (std::size_t b = t; b < sizes.size(); b += workers) run_batch(b);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  double total = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += losses[i];
    if (metrics::predicted_label(result.records[i].scores) == static_cast<std::size_t>(result.records[i].true_label))
      ++correct;
  }
  result.loss = total / static_cast<double>(n);
  result.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return result;
}

// ---- history ----

std::string history_to_csv(std::span<const EpochRecord> history) {
  std::string out = "epoch,train_loss,train_acc,test_loss,test_acc\n";
  char buf[160];
  for (const EpochRecord& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss, r.train_acc, r.test_loss,
                  r.test_acc);
    out += buf;
  }
  return out;
}

std::vector<EpochRecord> history_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train_loss,train_acc,test_loss,test_acc")
    throw FormatError("history: missing header");
  std::vector<EpochRecord> out;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    EpochRecord r;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf%c", &r.epoch, &r.train_loss, &r.train_acc, &r.test_loss,
                    &r.test_acc, &tail) != 5)
      throw FormatError("history line " + std::to_string(n) + ": expected 5 fields");
    out.push_back(r);
  }
  return out;
}

}  // namespace hgt::train
