#include "hgtnet/config.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "hgtnet/errors.hpp"

namespace hgt::config {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const Entry& e, const char* what) {
  throw ConfigError("line " + std::to_string(e.line) + ": " + e.key + " = '" + e.value + "' is not " + what);
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

void line(std::string& out, const std::string& key, const std::string& value) { out += key + " = " + value + "\n"; }

}  // namespace

std::vector<Entry> parse(const std::string& text, const std::string& source) {
  std::vector<Entry> out;
  std::istringstream in(text);
  std::string raw;
  std::size_t n = 0;
  while (std::getline(in, raw)) {
    ++n;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(n) + ": expected 'key = value'");
    Entry e{trim(body.substr(0, eq)), trim(body.substr(eq + 1)), n};
    if (e.key.empty()) throw ConfigError(source + ":" + std::to_string(n) + ": empty key");
    out.push_back(std::move(e));
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const Entry& e) {
  double v = 0.0;
  const char* end = e.value.data() + e.value.size();
  auto [p, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc() || p != end) bad_value(e, "a number");
  return v;
}

std::uint64_t parse_u64(const Entry& e) {
  std::uint64_t v = 0;
  const char* end = e.value.data() + e.value.size();
  auto [p, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc() || p != end) bad_value(e, "a non-negative integer");
  return v;
}

bool parse_bool(const Entry& e) {
  if (e.value == "true" || e.value == "1") return true;
  if (e.value == "false" || e.value == "0") return false;
  bad_value(e, "a boolean");
}

std::vector<std::size_t> parse_size_list(const Entry& e) {
  std::vector<std::size_t> out;
  std::stringstream ss(e.value);
  for (std::string item; std::getline(ss, item, ',');) {
    Entry part{e.key, trim(item), e.line};
    out.push_back(static_cast<std::size_t>(parse_u64(part)));
  }
  if (out.empty()) bad_value(e, "a comma-separated list");
  return out;
}

bool set_model_field(model::ModelConfig& c, const Entry& e) {
  const std::string& k = e.key;
  if (k == "model.image_size") c.image_size = parse_u64(e);
  else if (k == "model.patch_size") c.patch_size = parse_u64(e);
  else if (k == "model.embed_dim") c.embed_dim = parse_u64(e);
  else if (k == "model.num_heads") c.num_heads = parse_u64(e);
  else if (k == "model.num_encoder_layers") c.num_encoder_layers = parse_u64(e);
  else if (k == "model.mlp_ratio") c.mlp_ratio = parse_double(e);
  else if (k == "model.cnn_channels") c.cnn_channels = parse_size_list(e);
  else if (k == "model.dropout") c.dropout_p = parse_double(e);
  else if (k == "model.gat_leaky_slope") c.gat_leaky_slope = parse_double(e);
  else if (k == "model.num_classes") c.num_classes = parse_u64(e);
  else if (k == "model.num_rotations") c.num_rotations = parse_u64(e);
  else if (k == "model.rotation_loss_weight") c.rotation_loss_weight = parse_double(e);
  else return false;
  return true;
}

bool set_train_field(train::TrainConfig& c, const Entry& e) {
  const std::string& k = e.key;
  if (k == "train.learning_rate") c.learning_rate = parse_double(e);
  else if (k == "train.batch_size") c.batch_size = parse_u64(e);
  else if (k == "train.max_epochs") c.max_epochs = parse_u64(e);
  else if (k == "train.patience") c.patience = parse_u64(e);
  else if (k == "train.adam_beta1") c.adam_beta1 = parse_double(e);
  else if (k == "train.adam_beta2") c.adam_beta2 = parse_double(e);
  else if (k == "train.adam_eps") c.adam_eps = parse_double(e);
  else if (k == "train.seed") c.seed = parse_u64(e);
  else if (k == "train.test_fraction") c.test_fraction = parse_double(e);
  else if (k == "train.eval_threads") c.eval_threads = parse_u64(e);
  else return false;
  return true;
}

bool set_augment_field(data::AugmentPolicy& p, const Entry& e) {
  const std::string& k = e.key;
  if (k == "augment.flip_prob") p.flip_prob = parse_double(e);
  else if (k == "augment.max_rotation_deg") p.max_rotation_deg = parse_double(e);
  else if (k == "augment.brightness") p.jitter.brightness = parse_double(e);
  else if (k == "augment.contrast") p.jitter.contrast = parse_double(e);
  else if (k == "augment.saturation") p.jitter.saturation = parse_double(e);
  else if (k == "augment.hue") p.jitter.hue = parse_double(e);
  else if (k == "augment.sharpness_factor") p.sharpness_factor = parse_double(e);
  else if (k == "augment.sharpness_prob") p.sharpness_prob = parse_double(e);
  else if (k == "augment.blur") p.blur_enabled = parse_bool(e);
  else if (k == "augment.blur_kernel") p.blur_kernel = parse_u64(e);
  else if (k == "augment.blur_sigma_min") p.blur_sigma_min = parse_double(e);
  else if (k == "augment.blur_sigma_max") p.blur_sigma_max = parse_double(e);
  else return false;
  return true;
}

std::string model_to_text(const model::ModelConfig& c) {
  std::string out;
  line(out, "model.image_size", std::to_string(c.image_size));
  line(out, "model.patch_size", std::to_string(c.patch_size));
  line(out, "model.embed_dim", std::to_string(c.embed_dim));
  line(out, "model.num_heads", std::to_string(c.num_heads));
  line(out, "model.num_encoder_layers", std::to_string(c.num_encoder_layers));
  line(out, "model.mlp_ratio", format_double(c.mlp_ratio));
  line(out, "model.cnn_channels", join_sizes(c.cnn_channels));
  line(out, "model.dropout", format_double(c.dropout_p));
  line(out, "model.gat_leaky_slope", format_double(c.gat_leaky_slope));
  line(out, "model.num_classes", std::to_string(c.num_classes));
  line(out, "model.num_rotations", std::to_string(c.num_rotations));
  line(out, "model.rotation_loss_weight", format_double(c.rotation_loss_weight));
  return out;
}

std::string train_to_text(const train::TrainConfig& c) {
  std::string out;
  line(out, "train.learning_rate", format_double(c.learning_rate));
  line(out, "train.batch_size", std::to_string(c.batch_size));
  line(out, "train.max_epochs", std::to_string(c.max_epochs));
  line(out, "train.patience", std::to_string(c.patience));
  line(out, "train.adam_beta1", format_double(c.adam_beta1));
  line(out, "train.adam_beta2", format_double(c.adam_beta2));
  line(out, "train.adam_eps", format_double(c.adam_eps));
  line(out, "train.seed", std::to_string(c.seed));
  line(out, "train.test_fraction", format_double(c.test_fraction));
  line(out, "train.eval_threads", std::to_string(c.eval_threads));
  return out;
}

std::string augment_to_text(const data::AugmentPolicy& p) {
  std::string out;
  line(out, "augment.flip_prob", format_double(p.flip_prob));
  line(out, "augment.max_rotation_deg", format_double(p.max_rotation_deg));
  line(out, "augment.brightness", format_double(p.jitter.brightness));
  line(out, "augment.contrast", format_double(p.jitter.contrast));
  line(out, "augment.saturation", format_double(p.jitter.saturation));
  line(out, "augment.hue", format_double(p.jitter.hue));
  line(out, "augment.sharpness_factor", format_double(p.sharpness_factor));
  line(out, "augment.sharpness_prob", format_double(p.sharpness_prob));
  line(out, "augment.blur", p.blur_enabled ? "true" : "false");
  line(out, "augment.blur_kernel", std::to_string(p.blur_kernel));
  line(out, "augment.blur_sigma_min", format_double(p.blur_sigma_min));
  line(out, "augment.blur_sigma_max", format_double(p.blur_sigma_max));
  return out;
}

}  // namespace hgt::config
