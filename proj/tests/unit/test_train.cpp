// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "aipo/error.hpp"
#include "aipo/train.hpp"
#include "scenarios.hpp"

using namespace aipo;

namespace {

hvae::HvaeConfig tiny_config() {
  hvae::HvaeConfig c;
  c.dims = {2, 2};
  c.hidden = 8;
  c.state = 6;
  c.feature = 6;
  c.height = c.width = 8;
  return c;
}

const Dataset& tiny_data() {
  static const Dataset d = generate_shapes(40, 8, 3, 9);
  return d;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("Adam step") {
  ParamStore p;
  p["a"] = NumArray::vector({1.0, -2.0, 0.5});
  p["b"] = NumArray::vector({3.0});
  AdamState st;
  const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};

  SUBCASE("first step moves by lr against the gradient sign") {
    GradMap g;
    g.emplace("a", NumArray::vector({0.3, -4.0, 1e-3}));
    REQUIRE(adam_step(p, g, st, cfg));
    CHECK(p["a"][0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(p["a"][1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
    CHECK(p["a"][2] == doctest::Approx(0.5 - 0.01).epsilon(1e-6));
    CHECK(p["b"][0] == 3.0);
    CHECK(st.step == 1);
  }
  SUBCASE("zero gradients leave parameters and decay moments") {
    GradMap g;
    g.emplace("a", NumArray::vector({1.0, 1.0, 1.0}));
    REQUIRE(adam_step(p, g, st, cfg));
    const ParamStore before = p;
    const NumArray m1 = st.m["a"], v1 = st.v["a"];
    GradMap z;
    z.emplace("a", NumArray::zeros({3}));
    p["a"] = before.at("a");
    REQUIRE(adam_step(p, z, st, cfg));
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(st.m["a"][i] == doctest::Approx(0.9 * m1[i]));
      CHECK(st.v["a"][i] == doctest::Approx(0.999 * v1[i]));
    }
  }
  SUBCASE("zero gradients on a fresh state") {
    GradMap z;
    z.emplace("a", NumArray::zeros({3}));
    const ParamStore before = p;
    REQUIRE(adam_step(p, z, st, cfg));
    CHECK(p == before);
  }
  SUBCASE("frozen names are not updated") {
    GradMap g;
    g.emplace("a", NumArray::vector({1.0, 1.0, 1.0}));
    g.emplace("b", NumArray::vector({1.0}));
    const ParamStore before = p;
    REQUIRE(adam_step(p, g, st, cfg, [](const std::string& n) { return n == "b"; }));
    CHECK(p["b"] == before.at("b"));
    CHECK(p["a"] != before.at("a"));
  }
  SUBCASE("non-finite gradients are rejected") {
    GradMap g;
    g.emplace("a", NumArray::vector({1.0, std::nan(""), 1.0}));
    const ParamStore before = p;
    CHECK_FALSE(adam_step(p, g, st, cfg));
    CHECK(p == before);
    CHECK(st.step == 0);
  }
  SUBCASE("unknown names") {
    GradMap g;
    g.emplace("zz", NumArray::vector({1.0}));
    CHECK_THROWS_AS(adam_step(p, g, st, cfg), Error);
  }
}

TEST_CASE("freeze rules") {
  TrainConfig c;
  c.freeze = {"dec.", "h0"};
  CHECK(c.is_frozen("dec.W1"));
  CHECK(c.is_frozen("h0"));
  CHECK_FALSE(c.is_frozen("h0x"));
  CHECK_FALSE(c.is_frozen("enc.l1.W1"));
  c.freeze_vae = true;
  CHECK(c.is_frozen("enc.l1.W1"));
  CHECK(c.is_frozen("prior.l2.b2"));
  CHECK_FALSE(c.is_frozen("penc.l1.W1"));
  CHECK_FALSE(c.is_frozen("pfeat.b1"));
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.lr = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.skip_threshold = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.batch = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.kl_warmup = -1;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(parse_objective("reverse") == Objective::reverse);
  CHECK(objective_name(Objective::forward) == "forward");
  CHECK_THROWS_AS(parse_objective("sideways"), Error);
}

TEST_CASE("training is deterministic and thread-count invariant") {
  Rng rng(1);
  const hvae::Model init = hvae::init_model(tiny_config(), rng);
  TrainConfig c;
  c.objective = Objective::forward;
  c.iterations = 12;
  c.batch = 6;
  c.seed = 4;
  const auto src = dataset_source(tiny_data(), Objective::forward, 0.35, 5, false);
  const TrainResult a = train(c, src, init);
  const TrainResult b = train(c, src, init);
  CHECK(a.model.params == b.model.params);
  c.threads = 3;
  const TrainResult t = train(c, src, init);
  CHECK(t.model.params == a.model.params);
  for (std::size_t i = 0; i < a.log.rows.size(); ++i) {
    CHECK(t.log.rows[i].objective == a.log.rows[i].objective);
    CHECK(t.log.rows[i].grad_norm == a.log.rows[i].grad_norm);
  }
  c.threads = 1;
  c.seed = 5;
  CHECK(train(c, src, init).model.params != a.model.params);
}

TEST_CASE("freezing everything keeps parameters constant") {
  Rng rng(2);
  const hvae::Model init = hvae::init_model(tiny_config(), rng);
  TrainConfig c;
  c.objective = Objective::reverse;
  c.iterations = 10;
  c.batch = 4;
  c.freeze_vae = true;
  c.freeze = {"penc.", "pfeat."};
  const TrainResult r = train(c, dataset_source(tiny_data(), Objective::reverse, 0.35, 5, false), init);
  CHECK(r.model.params == init.params);
  std::vector<double> obj;
  for (const auto& row : r.log.rows) {
    obj.push_back(row.objective);
    CHECK(row.grad_norm == 0.0);
  }
  CHECK(*std::max_element(obj.begin(), obj.end()) > *std::min_element(obj.begin(), obj.end()));
}

TEST_CASE("a tiny skip threshold skips every step") {
  Rng rng(3);
  const hvae::Model init = hvae::init_model(tiny_config(), rng);
  TrainConfig c;
  c.iterations = 8;
  c.batch = 4;
  c.skip_threshold = 1e-9;
  const TrainResult r = train(c, dataset_source(tiny_data(), Objective::uncond, 0.35, 5, false), init);
  CHECK(r.model.params == init.params);
  CHECK(r.log.skipped_count() == 8);
}

TEST_CASE("skipped steps leave parameters bitwise unchanged") {
  // Run step by step with a threshold that some steps exceed, and compare
  // the parameters around every skip.
  Rng rng(4);
  hvae::Model model = hvae::init_model(tiny_config(), rng);
  const auto src = dataset_source(tiny_data(), Objective::uncond, 0.35, 5, false);
  TrainConfig probe;
  probe.batch = 4;
  probe.iterations = 1;
  std::vector<double> norms;
  for (int it = 0; it < 10; ++it) norms.push_back(global_grad_norm(batch_gradient(model, probe, src, it).grads));
  std::sort(norms.begin(), norms.end());
  TrainConfig c = probe;
  c.skip_threshold = norms[5];
  c.iterations = 1;
  int skipped = 0, applied = 0;
  for (int it = 0; it < 10; ++it) {
    c.seed = static_cast<std::uint64_t>(it);
    const TrainResult r = train(c, src, model);
    if (r.log.rows[0].skipped) {
      CHECK(r.model.params == model.params);
      ++skipped;
    } else {
      CHECK(r.model.params != model.params);
      ++applied;
    }
  }
  CHECK(skipped > 0);
  CHECK(applied > 0);
}

TEST_CASE("frozen encoder and model stay fixed while the partial encoder learns") {
  auto s = testing::make_lg_scenario(16);
  Rng vrng(5);
  // Fixed validation set: 512 (observation, z ~ q(z|x)) pairs.
  std::vector<std::pair<MaskedImage, hvae::GroupNoise>> val;
  for (int i = 0; i < 512; ++i) {
    const Example ex = s.draw(vrng);
    val.emplace_back(*ex.observed, hvae::encode_pass(s.surrogate, ex.image, hvae::draw_noise(s.surrogate.config, vrng)).z);
  }
  const Validator validator = [&val](const hvae::Model& m) {
    double t = 0.0;
    for (const auto& [obs, z] : val) t += hvae::partial_log_density(m, obs, z);
    return t / static_cast<double>(val.size());
  };
  TrainConfig c;
  c.objective = Objective::forward;
  c.iterations = 500;
  c.batch = 16;
  c.lr = 3e-3;
  c.freeze_vae = true;
  c.val_every = 25;
  c.seed = 6;
  const TrainResult r = train(c, s.source(), s.surrogate, validator);
  for (const auto& [name, v] : s.surrogate.params) {
    if (!hvae::is_partial_param(name)) CHECK(r.model.params.at(name) == v);
  }
  std::vector<double> x, y;
  for (const auto& row : r.log.rows) {
    if (row.val_estimate) {
      x.push_back(row.iteration);
      y.push_back(*row.val_estimate);
    }
  }
  REQUIRE(y.size() == 20);
  CHECK(spearman(x, y) > 0.5);
  CHECK(y.back() > validator(s.surrogate));
}

TEST_CASE("encoder initialization of the partial encoder") {
  Rng rng(7);
  hvae::HvaeConfig cfg = tiny_config();
  const hvae::Model init = hvae::init_model(cfg, rng);
  TrainConfig c;
  c.objective = Objective::reverse;
  c.iterations = 0;
  c.init_partial_from_encoder = true;
  const TrainResult r = train(c, dataset_source(tiny_data(), Objective::reverse, 0.35, 5, false), init);
  const ImageGrid& img = tiny_data().images[0];
  const hvae::GroupNoise eps = hvae::draw_noise(cfg, rng);
  CHECK(hvae::encode_pass(r.model, img, eps).encoder ==
        hvae::partial_pass(r.model, apply_mask(img, Mask::ones(8, 8)), eps).partial);
}

TEST_CASE("training log CSV") {
  TrainLog log;
  log.rows.push_back({0, -1.5, 2.0, false, std::nullopt});
  log.rows.push_back({1, -1.25, 200.0, true, 0.5});
  const auto path = std::filesystem::temp_directory_path() / "aipo_train_log_test.csv";
  write_train_csv(log, path);
  std::ifstream in(path);
  std::string header, a, b;
  std::getline(in, header);
  std::getline(in, a);
  std::getline(in, b);
  CHECK(header == "iteration,objective,grad_norm,skipped,val_estimate");
  CHECK(a == "0,-1.5,2,0,");
  CHECK(b == "1,-1.25,200,1,0.5");
  std::filesystem::remove(path);
}

}  // TEST_SUITE
