#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hgtnet/augment.hpp"
#include "hgtnet/image.hpp"
#include "hgtnet/metrics.hpp"
#include "hgtnet/model.hpp"
#include "hgtnet/tensor.hpp"

namespace hgt::train {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 20;
  std::size_t patience = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  double test_fraction = 0.1;
  std::size_t eval_threads = 1;

  void validate() const;
};

// ---- losses ----

// Mean over the batch of -log softmax(logits)[label], via log-sum-exp.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);
// CE(class) + lambda * CE(rotation). lambda == 0 skips the rotation term.
Tensor combined_loss(const Tensor& class_logits, std::span<const int> labels, const Tensor& rot_logits,
                     std::span<const int> rot_labels, double lambda);

// ---- optimizer ----

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;  // one per parameter, registration order
  std::vector<std::vector<double>> v;

  static AdamState zeros_like(const model::Parameters& params);
};

// One bias-corrected update of a single buffer at step t (t >= 1).
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::uint64_t t, const TrainConfig& cfg);
// Increments state.step and updates every parameter from its accumulated grad.
void adam_step(model::Parameters& params, AdamState& state, const TrainConfig& cfg);

// ---- early stopping ----

enum class StopDecision { kContinue, kStop };

class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  // Records one epoch's test loss. Only strict improvements reset the counter.
  StopDecision observe(double test_loss);

  bool improved_last() const { return improved_last_; }
  double best_loss() const { return best_loss_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 0-based position in the sequence
  std::size_t counter() const { return counter_; }
  std::size_t observed() const { return observed_; }

  // Restores a previously saved tracker state.
  void restore(double best_loss, std::size_t best_epoch, std::size_t counter, std::size_t observed);

 private:
  std::size_t patience_;
  double best_loss_;
  std::size_t best_epoch_ = 0;
  std::size_t counter_ = 0;
  std::size_t observed_ = 0;
  bool improved_last_ = false;
};

StopDecision early_stopping_check(std::span<const double> test_losses, std::size_t patience);

// ---- batches ----

// Sizes of consecutive batches covering n samples; the last may be partial.
std::vector<std::size_t> batch_sizes(std::size_t n, std::size_t batch_size);

// Seeded Fisher-Yates permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

struct Batch {
  Tensor images;                // B x 3 x S x S, or 2B x 3 x S x S with pretext copies appended
  std::vector<int> labels;      // B
  std::vector<int> rot_labels;  // B, empty without pretext copies
};

// Augments every sample with its own per-epoch stream and, when `pretext` is
// set, appends one quarter-turn copy of each augmented view.
Batch make_train_batch(std::span<const data::ImageSample* const> samples, const data::AugmentPolicy& policy,
                       const data::DatasetStats& stats, std::uint64_t seed, std::uint64_t epoch, bool pretext);

// Resize + normalize only.
Tensor make_eval_batch(std::span<const data::ImageSample* const> samples, std::size_t size,
                       const data::DatasetStats& stats);

// ---- loops ----

struct StepResult {
  double loss = 0.0;
  std::size_t correct = 0;
};

// Forward, combined loss, backward and one Adam update on a prepared batch.
StepResult train_step(model::HGTNet& net, AdamState& state, const TrainConfig& cfg, const Batch& batch,
                      const RngStream& dropout_rng);

struct EpochStats {
  double loss = 0.0;  // sample-weighted mean of the combined objective
  double accuracy = 0.0;
  std::size_t batches = 0;
};

EpochStats train_epoch(model::HGTNet& net, std::span<const data::ImageSample> train, const data::AugmentPolicy& policy,
                       const data::DatasetStats& stats, AdamState& state, const TrainConfig& cfg, std::uint64_t epoch);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<metrics::PredictionRecord> records;  // input order
};

// Eval-mode forward without graph recording. Batches may run on `threads`
// worker threads; results do not depend on the thread count.
EvalResult evaluate(const model::HGTNet& net, std::span<const data::ImageSample> samples,
                    const data::DatasetStats& stats, std::size_t batch_size, std::size_t threads = 1);

// ---- history ----

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
};

std::string history_to_csv(std::span<const EpochRecord> history);
std::vector<EpochRecord> history_from_csv(const std::string& text);

// ---- checkpoints ----

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct Checkpoint {
  model::ModelConfig model_config;
  TrainConfig train_config;
  data::DatasetStats stats;
  std::vector<std::string> class_names;
  std::size_t epoch = 0;  // completed epochs
  double best_test_loss = 0.0;
  std::size_t best_epoch = 0;
  std::size_t stop_counter = 0;
  std::uint64_t adam_step = 0;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> moments;  // "m/<name>" and "v/<name>", may be empty
  std::vector<EpochRecord> history;
};

Checkpoint make_checkpoint(const model::HGTNet& net, const AdamState* state);
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes, const std::string& name);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies parameters into `net`; every name must appear exactly once with a
// matching shape.
void restore_parameters(model::HGTNet& net, const Checkpoint& ckpt);
AdamState restore_adam(const model::HGTNet& net, const Checkpoint& ckpt);

// ---- full run ----

struct FitOptions {
  std::optional<std::filesystem::path> out_dir;  // best.ckpt / last.ckpt / history.csv
  std::function<void(const EpochRecord&)> on_epoch;
};

struct FitState {
  model::HGTNet net;
  AdamState adam;
  EarlyStopping stopper;
  std::vector<EpochRecord> history;
  data::DatasetStats stats;
  std::vector<std::string> class_names;
  bool stopped_early = false;
};

FitState start_fit(const model::ModelConfig& mcfg, const TrainConfig& tcfg, const data::DatasetStats& stats,
                   std::vector<std::string> class_names);
FitState resume_fit(const Checkpoint& ckpt);

// Runs epochs until max_epochs or early stopping.
void fit(FitState& state, const TrainConfig& cfg, std::span<const data::ImageSample> train,
         std::span<const data::ImageSample> test, const data::AugmentPolicy& policy, const FitOptions& options);

}  // namespace hgt::train
