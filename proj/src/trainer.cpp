#include "h2lo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "h2lo/error.hpp"
#include "h2lo/metrics.hpp"

namespace h2lo {

void TrainConfig::validate() const {
  if (epochs < 1) throw DataError("epochs must be >= 1");
  if (!(lr0 > 0.0) || !(lr_min > 0.0)) throw DataError("learning rates must be positive");
  if (steps_per_pair < 1) throw DataError("steps_per_pair must be >= 1");
  if (!(kernel_sigma > 0.0) || kernel_size < 1 || kernel_size % 2 == 0) {
    throw DataError("derivative kernel needs sigma > 0 and an odd size");
  }
  if (loss.n_coords < 1) throw DataError("n_coords must be >= 1");
  if (loss.b_subvols < 1) throw DataError("b_subvols must be >= 1");
  if (loss.lambda_grad < 0.0) throw DataError("lambda_grad must be >= 0");
  if (loss.subvol_size < kernel_size) throw DataError("sub-volume must be at least as large as the derivative kernel");
  effective_model().validate();
}

ModelConfig TrainConfig::effective_model() const {
  ModelConfig m = model;
  if (replace_siren_with_relu_mlp) m.trunk = TrunkKind::ReluMlp;
  return m;
}

LossWeights TrainConfig::effective_loss() const {
  LossWeights w = loss;
  if (disable_grad_loss) w.lambda_grad = 0.0;
  return w;
}

nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["branch_channels"] = c.branch_channels;
  j["kernel_size"] = c.kernel_size;
  j["trunk_width"] = c.trunk_width;
  j["trunk_hidden_layers"] = c.trunk_hidden_layers;
  j["omega0"] = c.omega0;
  j["trunk"] = to_string(c.trunk);
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
  if (j.contains("branch_channels")) c.branch_channels = j["branch_channels"].get<std::vector<int>>();
  c.kernel_size = j.value("kernel_size", c.kernel_size);
  c.trunk_width = j.value("trunk_width", c.trunk_width);
  c.trunk_hidden_layers = j.value("trunk_hidden_layers", c.trunk_hidden_layers);
  c.omega0 = j.value("omega0", c.omega0);
  if (j.contains("trunk")) c.trunk = trunk_kind_from_string(j["trunk"].get<std::string>());
  return c;
}

nlohmann::ordered_json to_json(const LossWeights& w) {
  nlohmann::ordered_json j;
  j["lambda_grad"] = w.lambda_grad;
  j["n_coords"] = w.n_coords;
  j["b_subvols"] = w.b_subvols;
  j["subvol_size"] = w.subvol_size;
  return j;
}

LossWeights loss_weights_from_json(const nlohmann::json& j, LossWeights w) {
  w.lambda_grad = j.value("lambda_grad", w.lambda_grad);
  w.n_coords = j.value("n_coords", w.n_coords);
  w.b_subvols = j.value("b_subvols", w.b_subvols);
  w.subvol_size = j.value("subvol_size", w.subvol_size);
  return w;
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["epochs"] = c.epochs;
  j["lr0"] = c.lr0;
  j["lr_min"] = c.lr_min;
  j["loss"] = to_json(c.loss);
  j["kernel_sigma"] = c.kernel_sigma;
  j["kernel_size"] = c.kernel_size;
  j["seed"] = c.seed;
  j["steps_per_pair"] = c.steps_per_pair;
  j["disable_grad_loss"] = c.disable_grad_loss;
  j["replace_siren_with_relu_mlp"] = c.replace_siren_with_relu_mlp;
  j["model"] = to_json(c.model);
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.lr0 = j.value("lr0", c.lr0);
    c.lr_min = j.value("lr_min", c.lr_min);
    if (j.contains("loss")) c.loss = loss_weights_from_json(j["loss"], c.loss);
    c.kernel_sigma = j.value("kernel_sigma", c.kernel_sigma);
    c.kernel_size = j.value("kernel_size", c.kernel_size);
    c.seed = j.value("seed", c.seed);
    c.steps_per_pair = j.value("steps_per_pair", c.steps_per_pair);
    c.disable_grad_loss = j.value("disable_grad_loss", c.disable_grad_loss);
    c.replace_siren_with_relu_mlp = j.value("replace_siren_with_relu_mlp", c.replace_siren_with_relu_mlp);
    if (j.contains("model")) c.model = model_config_from_json(j["model"], c.model);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed training config: ") + e.what());
  }
  return c;
}

namespace {

std::string csv_number(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

nlohmann::json nullable(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }
double from_nullable(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

std::string TrainHistory::to_csv() const {
  std::string s = "epoch,loss,val_psnr,val_ssim,lr,l1,grad\n";
  for (const EpochRecord& r : epochs) {
    s += std::to_string(r.epoch) + "," + csv_number(r.loss) + "," + csv_number(r.val_psnr) + "," +
         csv_number(r.val_ssim) + "," + csv_number(r.lr) + "," + csv_number(r.l1) + "," + csv_number(r.grad) + "\n";
  }
  return s;
}

nlohmann::json TrainHistory::to_json() const {
  nlohmann::json a = nlohmann::json::array();
  for (const EpochRecord& r : epochs) {
    a.push_back({r.epoch, r.loss, r.l1, r.grad, nullable(r.val_psnr), nullable(r.val_ssim), r.lr});
  }
  return a;
}

TrainHistory TrainHistory::from_json(const nlohmann::json& j) {
  TrainHistory h;
  for (const auto& r : j) {
    h.epochs.push_back({r.at(0).get<int>(), r.at(1).get<double>(), r.at(2).get<double>(), r.at(3).get<double>(),
                        from_nullable(r.at(4)), from_nullable(r.at(5)), r.at(6).get<double>()});
  }
  return h;
}

ValidationScore validate(const H2LOModel<float>& model, const std::vector<TrainPair>& val_pairs) {
  if (val_pairs.empty()) throw DataError("validate: no validation pairs");
  ValidationScore s;
  for (const TrainPair& p : val_pairs) {
    const Volume3D pred = synthesize_full(model, *p.hf);
    s.psnr += std::min(psnr(pred, *p.lf), kPsnrCap);
    s.ssim += ssim3d(pred, *p.lf);
  }
  s.psnr /= static_cast<double>(val_pairs.size());
  s.ssim /= static_cast<double>(val_pairs.size());
  return s;
}

namespace {

void check_pairs(const std::vector<TrainPair>& pairs, const char* what) {
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const TrainPair& p = pairs[n];
    if (!p.hf || !p.lf) throw DataError(std::string(what) + " pair " + std::to_string(n) + " is incomplete");
    if (p.hf->dims() != p.lf->dims()) {
      throw DataError(std::string(what) + " pair " + std::to_string(n) + ": HF and LF dims differ");
    }
    require_finite(*p.hf, std::string(what) + " HF volume");
    require_finite(*p.lf, std::string(what) + " LF volume");
  }
}

std::vector<std::vector<float>> snapshot(const H2LOModel<float>& model) {
  std::vector<std::vector<float>> out;
  for (const auto& [name, t] : model.named_parameters()) out.push_back(t->values);
  return out;
}

}  // namespace

Trainer::Trainer(TrainConfig config, std::vector<TrainPair> train, std::vector<TrainPair> val)
    : config_(std::move(config)),
      train_(std::move(train)),
      val_(std::move(val)),
      model_(config_.effective_model(), derive_seed(config_.seed, 1)),
      rng_(derive_seed(config_.seed, 2)),
      kernels_(make_derivative_kernels(config_.kernel_sigma, config_.kernel_size)) {
  config_.validate();
  if (train_.empty()) throw DataError("training needs at least one pair");
  check_pairs(train_, "training");
  check_pairs(val_, "validation");
  for (const TrainPair& p : train_) config_.effective_loss().validate(p.hf->dims());
}

Trainer::Trainer(const Checkpoint& ckpt, std::vector<TrainPair> train, std::vector<TrainPair> val)
    : Trainer(ckpt.config, std::move(train), std::move(val)) {
  epoch_ = ckpt.epoch;
  rng_.set_state(ckpt.rng_state);
  history_ = ckpt.history;
  best_ = ckpt.best;
  adam_.t = ckpt.adam_t;
  for (auto& [name, t] : model_.named_parameters()) {
    const NamedTensor* v = ckpt.find("model." + name);
    if (!v) throw FormatError("checkpoint is missing tensor model." + name, 0);
    if (v->shape != t->shape) throw FormatError("checkpoint tensor model." + name + " has the wrong shape", 0);
    t->values = v->values;
    if (adam_.t > 0) {
      const NamedTensor* m = ckpt.find("adam.m." + name);
      const NamedTensor* s = ckpt.find("adam.v." + name);
      if (!m || !s || m->values.size() != t->values.size() || s->values.size() != t->values.size()) {
        throw FormatError("checkpoint is missing Adam moments for " + name, 0);
      }
      adam_.m.push_back(m->values);
      adam_.v.push_back(s->values);
    }
    const NamedTensor* b = ckpt.find("best." + name);
    best_values_.push_back(b ? b->values : t->values);
  }
}

const EpochRecord& Trainer::run_epoch() {
  if (finished()) throw DataError("training already ran all configured epochs");
  const LossWeights weights = config_.effective_loss();
  const double lr = cosine_lr(epoch_, config_.schedule());

  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.below(i)]);

  EpochRecord rec;
  rec.epoch = epoch_;
  rec.lr = lr;
  int steps = 0;
  const auto params = model_.parameters();
  for (std::size_t idx : order) {
    const TrainPair& p = train_[idx];
    for (int s = 0; s < config_.steps_per_pair; ++s) {
      model_.zero_grad();
      const LossSample sample = draw_loss_sample(p.hf->dims(), weights, rng_);
      const LossTerms terms = total_loss(model_, *p.hf, *p.lf, weights, sample, kernels_, true);
      if (!std::isfinite(terms.total)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch_) + ", training pair " +
                             std::to_string(idx));
      }
      try {
        adam_step<float>(params, adam_, lr);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " (epoch " + std::to_string(epoch_) + ", training pair " +
                             std::to_string(idx) + ")");
      }
      rec.loss += terms.total;
      rec.l1 += terms.l1;
      rec.grad += terms.grad;
      ++steps;
    }
  }
  rec.loss /= steps;
  rec.l1 /= steps;
  rec.grad /= steps;

  if (!val_.empty()) {
    const ValidationScore v = validate(model_, val_);
    rec.val_psnr = v.psnr;
    rec.val_ssim = v.ssim;
    if (v.psnr > best_.val_psnr) {
      best_ = {epoch_, v.psnr, v.ssim};
      best_values_ = snapshot(model_);
    }
  }
  ++epoch_;
  history_.epochs.push_back(rec);
  return history_.epochs.back();
}

void Trainer::run(int until_epoch, const EpochCallback& on_epoch) {
  const int target = until_epoch < 0 ? config_.epochs : std::min(until_epoch, config_.epochs);
  while (epoch_ < target) {
    const EpochRecord& r = run_epoch();
    if (on_epoch) on_epoch(r);
  }
}

H2LOModel<float> Trainer::selected_model() const {
  H2LOModel<float> m = model_;
  if (val_.empty() || best_values_.empty()) return m;
  std::size_t n = 0;
  for (auto& [name, t] : m.named_parameters()) t->values = best_values_[n++];
  m.zero_grad();
  return m;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = config_;
  c.epoch = epoch_;
  c.rng_state = rng_.state();
  c.adam_t = adam_.t;
  c.best = best_;
  c.history = history_;
  const H2LOModel<float> selected = selected_model();
  const auto named = model_.named_parameters();
  const auto best_named = selected.named_parameters();
  for (std::size_t n = 0; n < named.size(); ++n) {
    const auto& [name, t] = named[n];
    c.tensors.push_back({"model." + name, t->shape, t->values});
    if (adam_.t > 0) {
      c.tensors.push_back({"adam.m." + name, t->shape, adam_.m[n]});
      c.tensors.push_back({"adam.v." + name, t->shape, adam_.v[n]});
    }
  }
  for (const auto& [name, t] : best_named) c.tensors.push_back({"best." + name, t->shape, t->values});
  return c;
}

TrainResult train(const std::vector<TrainPair>& pairs, const std::vector<TrainPair>& val_pairs,
                  const TrainConfig& config, const Trainer::EpochCallback& on_epoch) {
  Trainer t(config, pairs, val_pairs);
  t.run(-1, on_epoch);
  return {t.selected_model(), t.history()};
}

}  // namespace h2lo
