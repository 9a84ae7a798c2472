// SPDX-License-Identifier: Apache-2.0
//
// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.
//
//   aipo_acceptance [--cli <path to aipo>] [--work <dir>] [criterion...]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aipo/boed.hpp"
#include "aipo/evalmetrics.hpp"
#include "aipo/fileio.hpp"
#include "aipo/lg_oracle.hpp"
#include "aipo/objectives.hpp"
#include "aipo/train.hpp"
#include "../support/gradcheck.hpp"
#include "../support/scenarios.hpp"

namespace fs = std::filesystem;
using namespace aipo;
using namespace aipo::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double limit_seconds;
  std::function<Outcome()> run;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

struct Options {
  fs::path cli;
  fs::path work;
  std::vector<std::string> only;
};

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  bool pass = true;
  std::ostringstream d;
  double worst_op = 0.0, worst_obj = 0.0;
  for (const auto& r : check_ops(100, 1)) {
    worst_op = std::max(worst_op, r.max_rel_error);
    if (r.max_rel_error >= 1e-6) {
      pass = false;
      d << " op " << r.name << " rel " << fmt(r.max_rel_error) << " at " << r.worst << ";";
    }
  }
  int configs = 0;
  for (const auto& r : check_objectives(20, 2)) {
    configs = std::max(configs, r.instances);
    worst_obj = std::max(worst_obj, r.max_rel_error);
    if (r.max_rel_error >= 1e-4) {
      pass = false;
      d << " " << r.name << " rel " << fmt(r.max_rel_error) << " at " << r.worst << ";";
    }
  }
  if (configs < 20) pass = false;
  return {pass, "ops max rel " + fmt(worst_op) + ", objectives max rel " + fmt(worst_obj) + " over " +
                    std::to_string(configs) + " configurations" + d.str()};
}

hvae::Model train_lg_partial(const LgScenario& s, Objective objective) {
  TrainConfig tc;
  tc.objective = objective;
  tc.lr = 3e-3;
  tc.iterations = 10000;
  tc.batch = 32;
  tc.freeze_vae = true;
  tc.seed = 5;
  return train(tc, s.source(), s.surrogate).model;
}

Outcome forward_kl_oracle() {
  const LgScenario s = make_lg_scenario();
  const hvae::Model m = train_lg_partial(s, Objective::forward);
  const KlReport r = partial_kl_report(s, m, 64, 2000, 99);
  return {r.forward < 0.05, "KL(r || q^) = " + fmt(r.forward) + " nats over 64 held-out masks (limit 0.05)"};
}

Outcome reverse_kl_oracle() {
  const LgScenario s = make_lg_scenario();
  const hvae::Model m = train_lg_partial(s, Objective::reverse);
  const KlReport r = partial_kl_report(s, m, 64, 2000, 99);
  return {r.reverse < 0.05, "KL(q^ || p) = " + fmt(r.reverse) + " nats over 64 held-out masks (limit 0.05)"};
}

Outcome mass_covering() {
  const BimodalToy toy = make_bimodal_toy();
  double sd[2] = {0, 0};
  int i = 0;
  for (Objective obj : {Objective::forward, Objective::reverse}) {
    TrainConfig tc;
    tc.objective = obj;
    tc.lr = 3e-3;
    tc.iterations = 3000;
    tc.freeze_vae = true;
    tc.seed = 7;
    // AIPO-R starts from the full encoder's weights; AIPO does not.
    tc.init_partial_from_encoder = obj == Objective::reverse;
    const hvae::Model m = train(tc, toy.source(), toy.model).model;
    sd[i++] = toy.mean_partial_std(m, 400, 77);
  }
  const double ratio = sd[0] / sd[1];
  return {ratio >= 1.2, "std AIPO " + fmt(sd[0]) + ", AIPO-R " + fmt(sd[1]) + ", ratio " + fmt(ratio) + " (limit 1.2)"};
}

Outcome elbo_identity() {
  Rng rng(21);
  const LgScenario s = make_lg_scenario();
  lg::LinearGaussianEncoder enc = s.encoder;
  const int d = s.model.latent_dim();
  for (int r = 0; r < enc.A.rows(); ++r) {
    for (int c = 0; c < enc.A.cols(); ++c) enc.A(r, c) += 0.3 * rng.normal();
  }
  for (int r = 0; r < d; ++r) enc.a(r) += 0.3 * rng.normal();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(d, d);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c <= r; ++c) L(r, c) = 0.3 * rng.normal();
  }
  enc.cov = L * L.transpose() + 0.2 * Eigen::MatrixXd::Identity(d, d);
  Rng heads(22);
  const hvae::Model surrogate = lg::to_surrogate(s.model, enc, hvae::HeadKind::linear, 4, heads);
  const IdentityCheck c = elbo_joint_identity_check(surrogate, s.model, enc, s.marginal, 100000, rng);
  const double z = std::abs(c.lhs - c.rhs) / c.lhs_se;
  return {z <= 3.0, "mean ELBO " + fmt(c.lhs, 7) + " +- " + fmt(c.lhs_se, 3) + ", closed form " + fmt(c.rhs, 7) +
                        ", |diff| = " + fmt(z, 3) + " SE over " + std::to_string(c.samples) + " samples"};
}

std::vector<double> random_posterior(int K, Rng& rng) {
  std::vector<double> p(static_cast<std::size_t>(K));
  double s = 0.0;
  for (double& v : p) {
    v = -std::log(1.0 - rng.uniform());
    if (rng.bernoulli(0.2)) v = 0.0;
    s += v;
  }
  if (s == 0.0) {
    p[0] = 1.0;
    return p;
  }
  for (double& v : p) v /= s;
  return p;
}

Outcome eig_correctness() {
  // (a) non-negativity.
  Rng rng(31);
  double min_eig = 1e300;
  for (int i = 0; i < 10000; ++i) {
    const int K = 2 + static_cast<int>(rng.below(5));
    const int N = 1 + static_cast<int>(rng.below(10));
    std::vector<std::vector<double>> post;
    for (int n = 0; n < N; ++n) post.push_back(random_posterior(K, rng));
    std::vector<double> w;
    if (rng.bernoulli(0.5)) {
      double s = 0.0;
      for (int n = 0; n < N; ++n) {
        w.push_back(rng.uniform() + 1e-3);
        s += w.back();
      }
      for (double& v : w) v /= s;
    }
    min_eig = std::min(min_eig, boed::eig_from_posteriors(post, w));
  }
  const bool a = min_eig >= -1e-12;

  // (b) enumerated conditional mutual information in the tabular world.
  double max_b = 0.0;
  int cases = 0;
  for (int world = 0; world < 5; ++world) {
    Rng wr = Rng::stream(32, "tabular", static_cast<std::uint64_t>(world));
    const TabularWorld tw = TabularWorld::random(wr);
    const boed::LabelModel g = tw.label_model();
    const auto cands = tw.world().candidates();
    for (int code = 0; code < 16; ++code) {
      const ImageGrid truth = TabularWorld::decode(code);
      for (int subset = 0; subset < 16; ++subset) {
        std::vector<ScanCoord> scans;
        for (int k = 0; k < 4; ++k) {
          if (subset >> k & 1) scans.push_back(cands[static_cast<std::size_t>(k)]);
        }
        const MaskedImage obs = apply_mask(truth, mask_from_scans(scans, 1, 2, 2));
        std::vector<ImageGrid> comps;
        std::vector<double> w;
        tw.completions(obs, comps, w);
        for (int k = 0; k < 4; ++k) {
          if (subset >> k & 1) continue;
          const ScanCoord c = cands[static_cast<std::size_t>(k)];
          const double eig = boed::eig_estimate(g, comps, scans, c, 1, w);
          max_b = std::max(max_b, std::abs(eig - tw.conditional_mi(obs, c)));
          ++cases;
        }
      }
    }
  }
  const bool b = max_b <= 1e-9;

  // (c) mean of per-sample information gains.
  double max_c = 0.0;
  Rng cr(33);
  Rng wr(34);
  const TabularWorld tw = TabularWorld::random(wr);
  const boed::LabelModel g = tw.label_model();
  const auto cands = tw.world().candidates();
  for (int i = 0; i < 2000; ++i) {
    const int N = 1 + static_cast<int>(cr.below(10));
    std::vector<ImageGrid> comps;
    for (int n = 0; n < N; ++n) comps.push_back(TabularWorld::decode(static_cast<int>(cr.below(16))));
    std::vector<ScanCoord> scans;
    const ScanCoord c = cands[cr.below(4)];
    if (cr.bernoulli(0.5)) scans.push_back(cands[cr.below(4)]);
    const double eig = boed::eig_estimate(g, comps, scans, c, 1);
    double mean_ig = 0.0;
    for (int n = 0; n < N; ++n) mean_ig += boed::ig_per_sample(g, comps, scans, c, 1, static_cast<std::size_t>(n));
    mean_ig /= N;
    max_c = std::max(max_c, std::abs(mean_ig - eig));
  }
  const bool c = max_c <= 1e-12;
  return {a && b && c, "(a) min EIG " + fmt(min_eig) + " over 10000 instances; (b) max |EIG - MI| " + fmt(max_b) +
                           " over " + std::to_string(cases) + " cases; (c) max |mean IG - EIG| " + fmt(max_c)};
}

// ---------------------------------------------------------------------------
// Shapes pipeline, shared by the BOED and metric criteria.

std::optional<ShapesPipeline> g_pipeline;

const ShapesPipeline& pipeline() {
  if (!g_pipeline) g_pipeline = build_shapes_pipeline(PipelineBudget{}, 2024);
  return *g_pipeline;
}

double auroc_at(const boed::Evaluation& ev, const std::string& strategy, int step) {
  for (const auto& r : ev.rows) {
    if (r.strategy == strategy && r.step == step) return r.auroc;
  }
  return std::nan("");
}

Outcome boed_end_to_end() {
  const ShapesPipeline& p = pipeline();
  boed::ScanWorld world;  // 16x16, G=5, p=4, T=5, N=10
  world.validate();
  const boed::LabelModel g = boed::classifier_model(p.classifier);
  const Completer complete = model_completer(p.aipo, true);
  const boed::Context ctx{&world, &g, &complete, p.train.images};
  const std::vector<boed::Strategy> strategies = {boed::Strategy::eig, boed::Strategy::random,
                                                  boed::Strategy::nongreedy_uncond};
  const int episodes = 200;
  const auto ev = boed::evaluate_strategies(ctx, p.test, strategies, episodes, 77);
  const std::size_t ran = ev.episodes.front().size();

  const double eig = auroc_at(ev, "eig", 3);
  const double rnd = auroc_at(ev, "random", 3);
  const double ng = auroc_at(ev, "nongreedy", 3);
  bool dominates = true;
  for (const auto& r : ev.rows) {
    if (r.strategy == "upper_bound") continue;
    if (!(auroc_at(ev, "upper_bound", r.step) > r.auroc)) dominates = false;
  }
  const bool pass = ran >= 200 && eig - rnd > 0.03 && ng >= rnd && dominates;
  return {pass, "AUROC at t=3: eig " + fmt(eig) + ", random " + fmt(rnd) + ", nongreedy_uncond " + fmt(ng) +
                    ", upper bound " + fmt(auroc_at(ev, "upper_bound", 3)) + (dominates ? " (dominates)" : " (does not dominate)") +
                    "; " + std::to_string(ran) + " episodes"};
}

Outcome metric_sanity() {
  std::ostringstream d;
  bool pass = true;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      d << " failed: " << what << ";";
    }
  };

  // Inception score closed forms.
  const std::vector<std::vector<double>> same(5, {0.2, 0.3, 0.5});
  check(std::abs(is_mutual_information(same) - 1.0) < 1e-12, "IS of identical posteriors");
  std::vector<std::vector<double>> onehot;
  for (int k = 0; k < 4; ++k) {
    for (int r = 0; r < 3; ++r) {
      std::vector<double> v(4, 0.0);
      v[static_cast<std::size_t>(k)] = 1.0;
      onehot.push_back(v);
    }
  }
  check(std::abs(is_mutual_information(onehot) - 4.0) < 1e-9, "IS of balanced one-hot posteriors");

  // Frechet distance identities.
  Rng rng(41);
  auto random_summary = [&](int F) {
    std::vector<std::vector<double>> f(40, std::vector<double>(static_cast<std::size_t>(F)));
    for (auto& row : f) {
      for (double& v : row) v = rng.normal();
    }
    return GaussianSummary::fit(f);
  };
  const GaussianSummary a = random_summary(5), b = random_summary(5);
  check(std::abs(frechet_distance(a, a)) < 1e-9, "FD(a, a) = 0");
  check(std::abs(frechet_distance(a, b) - frechet_distance(b, a)) < 1e-9, "FD symmetry");
  GaussianSummary da, db;
  da.mean = Eigen::VectorXd::Random(3);
  db.mean = Eigen::VectorXd::Random(3);
  Eigen::VectorXd va(3), vb(3);
  va << 0.5, 1.3, 2.0;
  vb << 1.1, 0.2, 0.7;
  da.cov = va.asDiagonal();
  db.cov = vb.asDiagonal();
  da.count = db.count = 10;
  double hand = 0.0;
  for (int i = 0; i < 3; ++i) {
    hand += std::pow(da.mean(i) - db.mean(i), 2) + std::pow(std::sqrt(va(i)) - std::sqrt(vb(i)), 2);
  }
  check(std::abs(frechet_distance(da, db) - hand) < 1e-9, "FD diagonal case");

  // Pipeline-level checks.
  const ShapesPipeline& p = pipeline();
  const Completer paste_only = [](const MaskedImage& x, Rng&) {
    ImageGrid img = ImageGrid::blank(x.height(), x.width(), x.channels());
    img.pixels = x.observed();
    return img;
  };
  // Holes mode with no patches observes everything, so pasting returns the test images.
  const double fid_self = fid_n_pipeline(p.classifier, p.test, paste_only, 0, MaskMode::holes, 0.35, 5).value;
  check(std::abs(fid_self) < 1e-6, "FID of test vs test");
  Rng dr(42);
  const ImageGrid& first = p.test.images.front();
  const double div_det =
      pairwise_diversity(p.classifier, paste_only, apply_mask(first, Mask::ones(first.height, first.width)), 50, dr)
          .mean;
  check(div_det == 0.0, "diversity of a deterministic completer");

  const Completer aipo = model_completer(p.aipo, true);
  double div[2] = {0, 0};
  const int n_max = 5;
  int slot = 0;
  for (int n : {0, n_max}) {
    for (int o = 0; o < 10; ++o) {
      Rng r = Rng::stream(derive_seed(43, "diversity", static_cast<std::uint64_t>(n)), "observation",
                          static_cast<std::uint64_t>(o));
      const ImageGrid& img = p.test.images[static_cast<std::size_t>(o)];
      const MaskedImage x = apply_mask(img, sample_eval_mask(img.height, img.width, 0.35, n, MaskMode::patches, r));
      div[slot] += pairwise_diversity(p.classifier, aipo, x, 1000, r).mean / 10.0;
    }
    ++slot;
  }
  check(div[0] > div[1], "diversity falls with observed patches");
  return {pass, "IS closed forms, FD identities, FID(test, test) " + fmt(fid_self) + ", deterministic diversity " +
                    fmt(div_det) + ", AIPO diversity at 0 patches " + fmt(div[0]) + " vs " + std::to_string(n_max) +
                    " patches " + fmt(div[1]) + d.str()};
}

// ---------------------------------------------------------------------------

int run_in(const fs::path& dir, const fs::path& cli, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" + cli.string() + "' " + args + " >>log.txt 2>&1";
  return std::system(cmd.c_str());
}

std::map<std::string, Bytes> snapshot(const fs::path& dir) {
  std::map<std::string, Bytes> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return files;
}

Outcome reproducibility(const Options& opt) {
  if (opt.cli.empty() || !fs::exists(opt.cli)) return {false, "CLI binary not found (pass --cli)"};
  const std::vector<std::string> steps = {
      "gen-data --out data.aipd --count 240 --seed 5",
      "classifier-train --data data.aipd --out cls.aipc --seed 5 --set classifier.iterations=200",
      "train-vae --data data.aipd --out vae.aipc --seed 5 --threads 1 --set train.iterations=40",
      "train-partial --objective forward --vae vae.aipc --freeze-vae --data data.aipd --out aipo.aipc --seed 5 "
      "--threads 1 --set train.iterations=40",
      "train-partial --objective reverse --vae vae.aipc --freeze-vae --init-from-encoder --data data.aipd "
      "--out aipor.aipc --seed 5 --threads 1 --set train.iterations=40",
      "eval --model aipo.aipc --data data.aipd --classifier cls.aipc --out metrics.csv --seed 5 --threads 1 "
      "--set eval.pairs=20 --set eval.observations=3",
      "boed --model aipo.aipc --classifier cls.aipc --data data.aipd --strategy eig,epe,random,uncond,nongreedy "
      "--episodes 6 --maps 2 --cross-task --out-dir boed --seed 5 --threads 1",
      "inpaint --model aipo.aipc --image probe.pgm --mask patches:2 --samples 3 --paste --out-dir inpaint --seed 5",
  };
  std::map<std::string, Bytes> runs[2];
  for (int r = 0; r < 2; ++r) {
    const fs::path dir = opt.work / ("repro_run" + std::to_string(r));
    fs::remove_all(dir);
    fs::create_directories(dir);
    ImageGrid probe = generate_shapes(1, 16, 4, 9).images.front();
    write_pgm(to_gray(probe), dir / "probe.pgm");
    for (const auto& s : steps) {
      if (run_in(dir, opt.cli, s) != 0) return {false, "command failed: aipo " + s};
    }
    fs::remove(dir / "log.txt");
    runs[r] = snapshot(dir);
  }
  std::size_t differing = 0;
  std::string first_diff;
  for (const auto& [name, bytes] : runs[0]) {
    auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != bytes) {
      if (differing++ == 0) first_diff = name;
    }
  }
  const bool same_set = runs[0].size() == runs[1].size();
  return {differing == 0 && same_set,
          std::to_string(runs[0].size()) + " output files compared across two runs, " + std::to_string(differing) +
              " differ" + (first_diff.empty() ? "" : " (first: " + first_diff + ")")};
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  opt.work = fs::temp_directory_path() / "aipo-acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) {
      opt.cli = fs::absolute(argv[++i]);
    } else if (a == "--work" && i + 1 < argc) {
      opt.work = fs::absolute(argv[++i]);
    } else {
      opt.only.push_back(a);
    }
  }
  fs::create_directories(opt.work);

  const std::vector<Criterion> criteria = {
      {"gradient-suite", 120, gradient_suite},
      {"forward-kl-oracle", 300, forward_kl_oracle},
      {"reverse-kl-oracle", 300, reverse_kl_oracle},
      {"mass-covering-ordering", 300, mass_covering},
      {"elbo-identity", 120, elbo_identity},
      {"eig-correctness", 120, eig_correctness},
      {"boed-end-to-end", 1800, boed_end_to_end},
      {"metric-sanity", 600, metric_sanity},
      {"reproducibility", 900, [&opt] { return reproducibility(opt); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!opt.only.empty() && std::find(opt.only.begin(), opt.only.end(), c.name) == opt.only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::cout << (pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << " [" << fmt(secs, 3) << " s, limit "
              << c.limit_seconds << " s" << (in_time ? "" : ", over time") << "]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
