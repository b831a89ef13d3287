#include <bit>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "h2lo/error.hpp"
#include "h2lo/metrics.hpp"
#include "h2lo/phantom.hpp"
#include "h2lo/trainer.hpp"
#include "../support.hpp"

using namespace h2lo;

namespace {

struct Fixture {
  std::vector<Subject> subjects;
  std::vector<TrainPair> train, val;
  TrainConfig cfg;

  Fixture() {
    PhantomSpec ps;
    ps.dims = {10, 10, 10};
    for (int i = 0; i < 3; ++i) subjects.push_back(gen_subject(i, ps, {}, 11));
    train = {{&subjects[0].hf, &subjects[0].lf}, {&subjects[1].hf, &subjects[1].lf}};
    val = {{&subjects[2].hf, &subjects[2].lf}};
    cfg.epochs = 6;
    cfg.lr0 = 1e-3;
    cfg.lr_min = 1e-5;
    cfg.seed = 5;
    cfg.loss.n_coords = 200;
    cfg.loss.subvol_size = 8;
    cfg.model = oracle::tiny_config();
  }
};

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t n = 0; n < a.size(); ++n)
    if (std::bit_cast<std::uint32_t>(a[n]) != std::bit_cast<std::uint32_t>(b[n])) return false;
  return true;
}

bool same_model(const H2LOModel<float>& a, const H2LOModel<float>& b) {
  const auto na = a.named_parameters(), nb = b.named_parameters();
  for (std::size_t n = 0; n < na.size(); ++n)
    if (!same_bits(na[n].second->values, nb[n].second->values)) return false;
  return true;
}

}  // namespace

TEST_CASE("training is deterministic and records every epoch") {
  Fixture f;
  const TrainResult a = train(f.train, f.val, f.cfg);
  const TrainResult b = train(f.train, f.val, f.cfg);
  REQUIRE(a.history.epochs.size() == 6);
  CHECK(a.history.to_csv() == b.history.to_csv());
  CHECK(same_model(a.model, b.model));
  CHECK(a.history.epochs[0].lr == 1e-3);
  CHECK(a.history.epochs[5].lr == doctest::Approx(1e-5));
  for (const auto& r : a.history.epochs) {
    CHECK(std::isfinite(r.loss));
    CHECK(std::isfinite(r.val_psnr));
  }
  CHECK(a.history.to_csv().rfind("epoch,loss,val_psnr,val_ssim,lr", 0) == 0);
}

TEST_CASE("disabling the gradient loss records L1-only values and changes the trajectory") {
  Fixture f;
  TrainConfig ab = f.cfg;
  ab.disable_grad_loss = true;
  const TrainResult full = train(f.train, {}, f.cfg);
  const TrainResult l1 = train(f.train, {}, ab);
  for (const auto& r : l1.history.epochs) CHECK(r.loss == r.l1);
  CHECK(l1.history.epochs[4].loss != full.history.epochs[4].loss);
  CHECK(ab.effective_loss().lambda_grad == 0.0);
  CHECK(f.cfg.effective_loss().lambda_grad == 1.0);
}

TEST_CASE("relu ablation swaps the trunk only") {
  Fixture f;
  TrainConfig ab = f.cfg;
  ab.replace_siren_with_relu_mlp = true;
  CHECK(ab.effective_model().trunk == TrunkKind::ReluMlp);
  CHECK(param_count(ab.effective_model()) == param_count(f.cfg.model));
  ab.epochs = 2;
  const TrainResult r = train(f.train, {}, ab);
  CHECK(r.history.epochs.size() == 2);
}

TEST_CASE("model selection keeps the best validation epoch") {
  Fixture f;
  Trainer t(f.cfg, f.train, f.val);
  t.run();
  const auto& h = t.history().epochs;
  int best = 0;
  for (int e = 1; e < static_cast<int>(h.size()); ++e)
    if (h[e].val_psnr > h[best].val_psnr) best = e;
  CHECK(t.best().epoch == best);
  const ValidationScore s = validate(t.selected_model(), f.val);
  CHECK(s.psnr == doctest::Approx(h[best].val_psnr).epsilon(1e-12));
}

TEST_CASE("validate on a perfect model") {
  H2LOModel<float> m(oracle::tiny_config(), 1);
  for (auto* p : m.parameters()) std::fill(p->values.begin(), p->values.end(), 0.0f);
  m.beta.values[0] = 0.375f;
  const Volume3D hf({6, 6, 6}, 0.5f), lf({6, 6, 6}, 0.375f);
  const ValidationScore s = validate(m, {{&hf, &lf}});
  CHECK(s.psnr == kPsnrCap);
  CHECK(s.ssim == 1.0);
  CHECK_THROWS_AS(validate(m, {}), DataError);
}

TEST_CASE("checkpoint round trip and resume") {
  Fixture f;
  const auto dir = std::filesystem::temp_directory_path() / "h2lo_ckpt_test";
  std::filesystem::create_directories(dir);

  Trainer straight(f.cfg, f.train, f.val);
  straight.run();

  Trainer first(f.cfg, f.train, f.val);
  first.run(3);
  save_checkpoint(dir / "mid.h2lo", first.checkpoint());
  const Checkpoint loaded = load_checkpoint(dir / "mid.h2lo");
  const Checkpoint orig = first.checkpoint();
  REQUIRE(loaded.tensors.size() == orig.tensors.size());
  for (std::size_t n = 0; n < orig.tensors.size(); ++n) {
    CHECK(loaded.tensors[n].name == orig.tensors[n].name);
    CHECK(loaded.tensors[n].shape == orig.tensors[n].shape);
    CHECK(same_bits(loaded.tensors[n].values, orig.tensors[n].values));
  }
  CHECK(loaded.epoch == 3);
  CHECK(loaded.rng_state == orig.rng_state);
  CHECK(encode_checkpoint(loaded) == encode_checkpoint(orig));

  Trainer resumed(loaded, f.train, f.val);
  resumed.run();
  CHECK(same_model(resumed.current_model(), straight.current_model()));
  CHECK(same_model(resumed.selected_model(), straight.selected_model()));
  CHECK(resumed.history().to_csv() == straight.history().to_csv());
  CHECK(same_model(model_from_checkpoint(resumed.checkpoint(), "model."), straight.current_model()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint decoding errors") {
  Fixture f;
  f.cfg.epochs = 1;
  Trainer t(f.cfg, f.train);
  t.run();
  auto bytes = encode_checkpoint(t.checkpoint());

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);

  Checkpoint c = t.checkpoint();
  c.version = 99;
  CHECK_THROWS_AS(decode_checkpoint(encode_checkpoint(c)), FormatError);

  auto trunc = bytes;
  trunc.resize(bytes.size() - 8);
  CHECK_THROWS_AS(decode_checkpoint(trunc), FormatError);

  auto garbled = bytes;
  garbled[14] = '#';
  CHECK_THROWS_AS(decode_checkpoint(garbled), FormatError);
}

TEST_CASE("config JSON round trip and validation") {
  TrainConfig c;
  c.epochs = 7;
  c.loss.lambda_grad = 0.5;
  c.replace_siren_with_relu_mlp = true;
  c.model.trunk_width = 64;
  const TrainConfig back = train_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  TrainConfig bad;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), DataError);
  bad = TrainConfig{};
  bad.lr0 = -1;
  CHECK_THROWS_AS(bad.validate(), DataError);
  CHECK_THROWS_AS(Trainer(TrainConfig{}, {}), DataError);
}
