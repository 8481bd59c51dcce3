#include "hgtnet/errors.hpp"
#include "hgtnet/io.hpp"
#include "hgtnet/training.hpp"

namespace hgt::train {
namespace {

Checkpoint snapshot(const FitState& s, const TrainConfig& cfg) {
  Checkpoint c = make_checkpoint(s.net, &s.adam);
  c.train_config = cfg;
  c.stats = s.stats;
  c.class_names = s.class_names;
  c.epoch = s.history.size();
  c.best_test_loss = s.stopper.best_loss();
  c.best_epoch = s.stopper.best_epoch();
  c.stop_counter = s.stopper.counter();
  c.history = s.history;
  return c;
}

}  // namespace

FitState start_fit(const model::ModelConfig& mcfg, const TrainConfig& tcfg, const data::DatasetStats& stats,
                   std::vector<std::string> class_names) {
  mcfg.validate();
  tcfg.validate();
  model::HGTNet net(mcfg, tcfg.seed);
  AdamState adam = AdamState::zeros_like(net.params());
  return FitState{std::move(net), std::move(adam), EarlyStopping(tcfg.patience), {}, stats, std::move(class_names),
                  false};
}

FitState resume_fit(const Checkpoint& ckpt) {
  ckpt.train_config.validate();
  model::HGTNet net(ckpt.model_config, ckpt.train_config.seed);
  restore_parameters(net, ckpt);
  AdamState adam = restore_adam(net, ckpt);
  EarlyStopping stopper(ckpt.train_config.patience);
  stopper.restore(ckpt.best_test_loss, ckpt.best_epoch, ckpt.stop_counter, ckpt.epoch);
  if (ckpt.history.size() != ckpt.epoch)
    throw CheckpointError(CheckpointErrorKind::kMalformed, "checkpoint history does not match its epoch count");
  FitState s{std::move(net), std::move(adam), stopper, ckpt.history, ckpt.stats, ckpt.class_names, false};
  s.stopped_early = ckpt.stop_counter >= ckpt.train_config.patience;
  return s;
}

void fit(FitState& state, const TrainConfig& cfg, std::span<const data::ImageSample> train,
         std::span<const data::ImageSample> test, const data::AugmentPolicy& policy, const FitOptions& options) {
  cfg.validate();
  policy.validate();
  const std::size_t size = state.net.config().image_size;
  if (policy.target_h != size || policy.target_w != size)
    throw ConfigError("augmentation target size does not match the model input size");
  if (train.empty()) throw DatasetError("training split is empty");
  if (test.empty()) throw DatasetError("test split is empty");

  while (!state.stopped_early && state.history.size() < cfg.max_epochs) {
    const std::size_t epoch = state.history.size();
    const EpochStats tr = train_epoch(state.net, train, policy, state.stats, state.adam, cfg, epoch);
    const EvalResult ev = evaluate(state.net, test, state.stats, cfg.batch_size, cfg.eval_threads);
    const EpochRecord rec{epoch + 1, tr.loss, tr.accuracy, ev.loss, ev.accuracy};
    state.history.push_back(rec);
    state.stopped_early = state.stopper.observe(ev.loss) == StopDecision::kStop;

    if (options.out_dir) {
      const Checkpoint c = snapshot(state, cfg);
      if (state.stopper.improved_last()) save_checkpoint(c, *options.out_dir / "best.ckpt");
      save_checkpoint(c, *options.out_dir / "last.ckpt");
      write_file_atomic(*options.out_dir / "history.csv", history_to_csv(state.history));
    }
    if (options.on_epoch) options.on_epoch(rec);
  }
}

}  // namespace hgt::train
