// SPDX-License-Identifier: Apache-2.0
#include "aipo/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "aipo/boed.hpp"
#include "aipo/classifier.hpp"
#include "aipo/config.hpp"
#include "aipo/error.hpp"
#include "aipo/evalmetrics.hpp"
#include "aipo/fileio.hpp"
#include "aipo/hvae.hpp"
#include "aipo/image.hpp"
#include "aipo/train.hpp"

namespace aipo {
namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 1;
  bool threads_given = false;
};

RunConfig make_config(const Common& c) {
  RunConfig rc;
  if (!c.config_file.empty()) rc.load_file(c.config_file);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw config_error("bad_set", "--set expects key=value, got '" + s + "'");
    rc.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed_given) rc.set("seed", std::to_string(c.seed));
  if (c.threads_given) rc.set("threads", std::to_string(c.threads));
  if (rc.integer("threads") < 1) throw config_error("bad_threads", "--threads must be >= 1");
  return rc;
}

void write_sidecar(const RunConfig& rc, const std::string& command, const fs::path& path) {
  const std::string text = "# aipo " + command + "\n" + rc.render();
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

fs::path sidecar_for_file(const fs::path& out) { return fs::path(out.string() + ".effective-config"); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("mkdir_failed", "cannot create " + dir.string());
}

std::pair<Dataset, Dataset> load_split(const RunConfig& rc, const std::string& path) {
  return split_dataset(read_dataset(path), rc.real("data.train_frac"));
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_file, "key=value configuration file");
  sub->add_option("--set", c.sets, "override a configuration key (key=value)");
  sub->add_option("--seed", c.seed, "master seed")->each([&c](const std::string&) { c.seed_given = true; });
  sub->add_option("--threads", c.threads, "worker lanes")->each([&c](const std::string&) { c.threads_given = true; });
}

std::string joined(const std::vector<std::string>& args) {
  std::string s;
  for (const auto& a : args) s += (s.empty() ? "" : " ") + a;
  return s;
}

Mask parse_mask_arg(const std::string& spec, int height, int width, double side_frac, Rng& rng) {
  if (spec.rfind("patches:", 0) == 0) {
    int n = 0;
    try {
      n = std::stoi(spec.substr(8));
    } catch (const std::exception&) {
      throw config_error("bad_mask", "patches:<n> expects an integer, got '" + spec + "'");
    }
    if (n < 0) throw config_error("bad_mask", "patch count must be non-negative");
    return sample_patch_mask_exact(height, width, side_frac, n, rng);
  }
  Mask m = read_mask_pgm(spec);
  if (m.height != height || m.width != width) {
    throw config_error("bad_mask", "mask " + spec + " does not match the image extents");
  }
  return m;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"aipo: amortized inpainting and scan-selection laboratory"};
  app.require_subcommand(1);
  Common common;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic shapes dataset");
  std::string gen_out;
  int gen_count = -1, gen_side = -1, gen_classes = -1;
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--count", gen_count);
  gen->add_option("--side", gen_side);
  gen->add_option("--classes", gen_classes);
  add_common(gen, common);

  // train-vae
  auto* tv = app.add_subcommand("train-vae", "train the unconditional VAE");
  std::string tv_data, tv_out, tv_log;
  tv->add_option("--data", tv_data)->required();
  tv->add_option("--out", tv_out)->required();
  tv->add_option("--log", tv_log, "training log CSV (default <out>.train.csv)");
  add_common(tv, common);

  // train-partial
  auto* tp = app.add_subcommand("train-partial", "train the partial encoder");
  std::string tp_objective = "forward", tp_vae, tp_data, tp_out, tp_log;
  bool tp_freeze = false, tp_init = false;
  tp->add_option("--objective", tp_objective)->check(CLI::IsMember({"forward", "reverse"}));
  tp->add_option("--vae", tp_vae);
  tp->add_option("--data", tp_data)->required();
  tp->add_flag("--freeze-vae", tp_freeze);
  tp->add_flag("--init-from-encoder", tp_init);
  tp->add_option("--out", tp_out)->required();
  tp->add_option("--log", tp_log);
  add_common(tp, common);

  // inpaint
  auto* ip = app.add_subcommand("inpaint", "sample completions of a masked image");
  std::string ip_model, ip_image, ip_mask, ip_dir;
  int ip_samples = 1;
  bool ip_paste = false;
  ip->add_option("--model", ip_model)->required();
  ip->add_option("--image", ip_image)->required();
  ip->add_option("--mask", ip_mask)->required();
  ip->add_option("--samples", ip_samples);
  ip->add_flag("--paste", ip_paste);
  ip->add_option("--out-dir", ip_dir)->required();
  add_common(ip, common);

  // eval
  auto* ev = app.add_subcommand("eval", "compute sample-quality metrics");
  std::string ev_model, ev_data, ev_cls, ev_metrics = "fid,is,diversity,recon", ev_mode = "patches", ev_out;
  ev->add_option("--model", ev_model)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--classifier", ev_cls);
  ev->add_option("--metrics", ev_metrics);
  ev->add_option("--mode", ev_mode)->check(CLI::IsMember({"patches", "holes"}));
  ev->add_option("--out", ev_out)->required();
  add_common(ev, common);

  // boed
  auto* bo = app.add_subcommand("boed", "run scan-selection episodes");
  std::string bo_model, bo_cls, bo_data, bo_strategy = "eig", bo_dir;
  int bo_episodes = 200, bo_maps = 3, bo_cross_step = 3;
  bool bo_cross = false;
  bo->add_option("--model", bo_model);
  bo->add_option("--classifier", bo_cls)->required();
  bo->add_option("--data", bo_data)->required();
  bo->add_option("--strategy", bo_strategy, "comma-separated: eig,epe,random,uncond,nongreedy");
  bo->add_option("--episodes", bo_episodes);
  bo->add_option("--maps", bo_maps, "episodes per strategy with exported EIG maps");
  bo->add_flag("--cross-task", bo_cross);
  bo->add_option("--cross-step", bo_cross_step);
  bo->add_option("--out-dir", bo_dir)->required();
  add_common(bo, common);

  // classifier-train
  auto* ct = app.add_subcommand("classifier-train", "train the masked-image classifier");
  std::string ct_data, ct_out;
  ct->add_option("--data", ct_data)->required();
  ct->add_option("--out", ct_out)->required();
  add_common(ct, common);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << "\n";
    return kExitConfig;
  }
  const std::string command = joined(args);

  try {
    const RunConfig rc = make_config(common);
    const std::uint64_t seed = rc.u64("seed");

    if (gen->parsed()) {
      const int count = gen_count >= 0 ? gen_count : rc.integer("data.count");
      const int side = gen_side >= 0 ? gen_side : rc.integer("data.side");
      const int classes = gen_classes >= 0 ? gen_classes : rc.integer("data.classes");
      if (count < 0) throw config_error("bad_count", "--count must be non-negative");
      write_dataset(generate_shapes(count, side, classes, derive_seed(seed, "data")), gen_out);
      write_sidecar(rc, command, sidecar_for_file(gen_out));
      out << "wrote " << count << " images to " << gen_out << "\n";
    } else if (tv->parsed()) {
      const auto [train_set, test_set] = load_split(rc, tv_data);
      Rng init = Rng::stream(seed, "train.init");
      hvae::Model model = hvae::init_model(rc.hvae(train_set.height, train_set.width, train_set.channels), init);
      TrainConfig cfg = rc.train(Objective::uncond);
      const auto src = dataset_source(train_set, Objective::uncond, rc.real("mask.side_frac"),
                                      rc.integer("mask.n_max"), rc.boolean("mask.holes"));
      TrainResult res = train(cfg, src, std::move(model));
      write_checkpoint(hvae::to_checkpoint(res.model), tv_out);
      write_train_csv(res.log, tv_log.empty() ? tv_out + ".train.csv" : tv_log);
      write_sidecar(rc, command, sidecar_for_file(tv_out));
      out << "trained " << cfg.iterations << " iterations, " << res.log.skipped_count() << " skipped\n";
    } else if (tp->parsed()) {
      if (tp_freeze && tp_vae.empty()) throw config_error("missing_vae", "--freeze-vae requires --vae <checkpoint>");
      const auto [train_set, test_set] = load_split(rc, tp_data);
      hvae::Model model;
      if (!tp_vae.empty()) {
        model = hvae::from_checkpoint(read_checkpoint(tp_vae));
      } else {
        Rng init = Rng::stream(seed, "train.init");
        model = hvae::init_model(rc.hvae(train_set.height, train_set.width, train_set.channels), init);
      }
      const Objective obj = parse_objective(tp_objective);
      TrainConfig cfg = rc.train(obj);
      cfg.freeze_vae = tp_freeze;
      cfg.init_partial_from_encoder = tp_init;
      const auto src = dataset_source(train_set, obj, rc.real("mask.side_frac"), rc.integer("mask.n_max"),
                                      rc.boolean("mask.holes"));
      TrainResult res = train(cfg, src, std::move(model));
      write_checkpoint(hvae::to_checkpoint(res.model), tp_out);
      write_train_csv(res.log, tp_log.empty() ? tp_out + ".train.csv" : tp_log);
      write_sidecar(rc, command, sidecar_for_file(tp_out));
      out << "trained " << cfg.iterations << " iterations, " << res.log.skipped_count() << " skipped\n";
    } else if (ip->parsed()) {
      if (ip_samples < 1) throw config_error("bad_samples", "--samples must be >= 1");
      const hvae::Model model = hvae::from_checkpoint(read_checkpoint(ip_model));
      ImageGrid img = from_gray(read_pgm(ip_image));
      if (model.config.likelihood == hvae::Likelihood::bernoulli) {
        for (double& p : img.pixels) p = p > 0.5 ? 1.0 : 0.0;
      }
      Rng rng = Rng::stream(seed, "eval.inpaint");
      const Mask m = parse_mask_arg(ip_mask, img.height, img.width, rc.real("mask.side_frac"), rng);
      const MaskedImage obs = apply_mask(img, m);
      ensure_dir(ip_dir);
      for (int s = 0; s < ip_samples; ++s) {
        const ImageGrid c = hvae::sample_completion(model, obs, rng, ip_paste);
        std::ostringstream name;
        name << "completion_" << std::setw(3) << std::setfill('0') << s << ".pgm";
        write_pgm(to_gray(c), fs::path(ip_dir) / name.str());
      }
      write_pgm(to_gray(ImageGrid{img.height, img.width, 1, obs.observed(), 0}), fs::path(ip_dir) / "observed.pgm");
      write_sidecar(rc, command, fs::path(ip_dir) / "effective-config");
      out << "wrote " << ip_samples << " completions to " << ip_dir << "\n";
    } else if (ev->parsed()) {
      const hvae::Model model = hvae::from_checkpoint(read_checkpoint(ev_model));
      const auto [train_set, test_set] = load_split(rc, ev_data);
      const MaskMode mode = parse_mask_mode(ev_mode);
      const double side_frac = rc.real("mask.side_frac");
      const int n_max = rc.integer("eval.n_max");
      const std::uint64_t eval_seed = derive_seed(seed, "eval");
      const Completer complete = model_completer(model, true);
      std::vector<MetricRow> rows;
      const auto metrics = split_list(ev_metrics);
      auto wants = [&](const char* m) { return std::find(metrics.begin(), metrics.end(), m) != metrics.end(); };
      for (const auto& m : metrics) {
        if (m != "fid" && m != "is" && m != "diversity" && m != "recon") {
          throw config_error("bad_metric", "unknown metric '" + m + "'");
        }
      }
      std::optional<Classifier> g;
      if (wants("fid") || wants("is") || wants("diversity")) {
        if (ev_cls.empty()) throw config_error("missing_classifier", "fid/is/diversity need --classifier");
        g = classifier_from_checkpoint(read_checkpoint(ev_cls));
      }
      const std::string mode_s(mask_mode_name(mode));
      if (wants("fid")) {
        for (int n = 0; n <= n_max; ++n) {
          rows.push_back({"fid", n, mode_s, fid_n_pipeline(*g, test_set, complete, n, mode, side_frac, eval_seed).value, seed});
        }
        rows.push_back({"fid_agg", n_max, mode_s, fid_agg(*g, test_set, complete, n_max, mode, side_frac, eval_seed).value, seed});
      }
      if (wants("is")) {
        for (int n = 0; n <= n_max; ++n) {
          rows.push_back({"is", n, mode_s, inception_score_n(*g, test_set, complete, n, mode, side_frac, eval_seed), seed});
        }
      }
      if (wants("diversity")) {
        const int obs_count = std::min<int>(rc.integer("eval.observations"), static_cast<int>(test_set.size()));
        for (int n = 0; n <= n_max; ++n) {
          double total = 0.0;
          for (int o = 0; o < obs_count; ++o) {
            Rng rng = Rng::stream(derive_seed(eval_seed, "diversity", static_cast<std::uint64_t>(n)), "observation",
                                  static_cast<std::uint64_t>(o));
            const ImageGrid& img = test_set.images[static_cast<std::size_t>(o)];
            const MaskedImage x = apply_mask(img, sample_eval_mask(img.height, img.width, side_frac, n, mode, rng));
            total += pairwise_diversity(*g, complete, x, rc.integer("eval.pairs"), rng).mean;
          }
          rows.push_back({"diversity", n, mode_s, obs_count > 0 ? total / obs_count : 0.0, seed});
        }
      }
      if (wants("recon")) {
        const auto probes = ood_probes(test_set.height, test_set.width);
        const auto report = reconstruction_error_report(model, test_set.images, probes);
        double in_sum = 0.0;
        int in_n = 0;
        for (const auto& r : report) {
          if (r.in_distribution) {
            in_sum += r.mean_error;
            ++in_n;
          }
        }
        rows.push_back({"recon_in", 0, "none", in_n ? in_sum / in_n : 0.0, seed});
        const char* names[] = {"recon_ood_checkerboard", "recon_ood_zeros", "recon_ood_ones"};
        std::size_t k = 0;
        for (const auto& r : report) {
          if (!r.in_distribution) rows.push_back({names[k++], 0, "none", r.mean_error, seed});
        }
      }
      write_metric_csv(rows, ev_out);
      write_sidecar(rc, command, sidecar_for_file(ev_out));
      out << "wrote " << rows.size() << " metric rows to " << ev_out << "\n";
    } else if (bo->parsed()) {
      const Classifier g = classifier_from_checkpoint(read_checkpoint(bo_cls));
      const auto [train_set, test_set] = load_split(rc, bo_data);
      std::vector<boed::Strategy> strategies;
      for (const auto& s : split_list(bo_strategy)) strategies.push_back(boed::parse_strategy(s));
      if (strategies.empty()) throw config_error("bad_strategy", "no strategy given");
      const bool needs_model = std::any_of(strategies.begin(), strategies.end(), [](boed::Strategy s) {
        return s == boed::Strategy::eig || s == boed::Strategy::epe;
      }) || bo_cross;
      std::optional<hvae::Model> model;
      if (!bo_model.empty()) model = hvae::from_checkpoint(read_checkpoint(bo_model));
      if (needs_model && !model) throw config_error("missing_model", "eig/epe strategies need --model");
      const boed::ScanWorld world = rc.world(test_set.height, test_set.width);
      const boed::LabelModel label_model = boed::classifier_model(g);
      Completer complete;
      if (model) complete = model_completer(*model, true);
      boed::Context ctx{&world, &label_model, model ? &complete : nullptr, train_set.images};
      const std::uint64_t boed_seed = derive_seed(seed, "boed");
      const auto evaluation = boed::evaluate_strategies(ctx, test_set, strategies, bo_episodes, boed_seed,
                                                        rc.integer("threads"));
      ensure_dir(bo_dir);
      for (std::size_t s = 0; s < strategies.size(); ++s) {
        const std::string name(boed::strategy_name(strategies[s]));
        const auto& eps = evaluation.episodes[s];
        for (std::size_t i = 0; i < eps.size(); ++i) {
          std::ostringstream base;
          base << name << "_" << std::setw(4) << std::setfill('0') << i;
          boed::write_episode_csv(eps[i], fs::path(bo_dir) / ("episode_" + base.str() + ".csv"));
          if (static_cast<int>(i) >= bo_maps) continue;
          for (const auto& step : eps[i].steps) {
            const std::string stem = "eigmap_" + base.str() + "_t" + std::to_string(step.step);
            boed::write_eigmap_csv(step.map, fs::path(bo_dir) / (stem + ".csv"));
            boed::write_eigmap_pgm(step.map, fs::path(bo_dir) / (stem + ".pgm"));
          }
        }
      }
      boed::write_summary_csv(evaluation.rows, fs::path(bo_dir) / "summary.csv");
      if (bo_cross) {
        const auto m = boed::cross_task_matrix(ctx, g, test_set, bo_episodes, bo_cross_step, boed_seed,
                                               rc.integer("threads"));
        boed::write_matrix_csv(m, fs::path(bo_dir) / "task_matrix.csv");
      }
      write_sidecar(rc, command, fs::path(bo_dir) / "effective-config");
      out << "ran " << evaluation.episodes.front().size() << " episodes per strategy into " << bo_dir << "\n";
    } else if (ct->parsed()) {
      const auto [train_set, test_set] = load_split(rc, ct_data);
      const Classifier g = train_classifier(train_set, rc.classifier());
      write_checkpoint(classifier_to_checkpoint(g), ct_out);
      write_sidecar(rc, command, sidecar_for_file(ct_out));
      const double acc = classifier_accuracy(g, test_set, Mask::ones(test_set.height, test_set.width));
      out << "held-out full-observation accuracy " << acc << "\n";
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::config: return kExitConfig;
      case ErrorKind::io: return kExitIo;
      case ErrorKind::numeric: return kExitNumeric;
    }
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return kExitNumeric;
  }
}

}  // namespace aipo
