// SPDX-License-Identifier: Apache-2.0
#include "aipo/boed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <thread>

#include "aipo/error.hpp"
#include "aipo/fileio.hpp"

namespace aipo::boed {
namespace {

std::vector<std::vector<double>> posteriors_at(const LabelModel& g, std::span<const ImageGrid> images,
                                               std::span<const ScanCoord> scans, ScanCoord candidate,
                                               int patch) {
  std::vector<std::vector<double>> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(g(reveal(img, scans, candidate, patch)));
  return out;
}

std::vector<int> available_cells(const ScanWorld& w, const EpisodeState& s) {
  std::vector<int> out;
  for (int c = 0; c < w.cells(); ++c) {
    if (std::find(s.cells.begin(), s.cells.end(), c) == s.cells.end()) out.push_back(c);
  }
  return out;
}

std::vector<ImageGrid> draw_pool(std::span<const ImageGrid> pool, int n, Rng& rng) {
  if (pool.empty()) throw config_error("empty_pool", "uncond strategies need dataset samples");
  std::vector<ImageGrid> out;
  for (int i = 0; i < n; ++i) out.push_back(pool[rng.below(pool.size())]);
  return out;
}

template <typename F>
void parallel_for(int count, int threads, F&& body) {
  const int lanes = std::max(1, std::min(threads, count));
  if (lanes == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(lanes));
  for (int lane = 0; lane < lanes; ++lane) {
    workers.emplace_back([&, lane] {
      try {
        for (int i = lane; i < count; i += lanes) body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(lane)] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

int argmax(std::span<const double> p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("open_failed", "cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  if (!out) throw io_error("write_failed", "cannot write " + path.string());
}

}  // namespace

void ScanWorld::validate() const {
  if (horizon < 1) throw config_error("bad_world", "horizon T must be >= 1");
  if (completions < 1) throw config_error("bad_world", "completions N must be >= 1");
  if (grid < 1) throw config_error("bad_world", "grid G must be >= 1");
  if (patch < 1 || patch > height || patch > width) throw config_error("bad_world", "scan patch does not fit the image");
}

std::vector<ScanCoord> ScanWorld::candidates() const {
  validate();
  auto axis = [this](int extent, int i) {
    if (grid == 1) return (extent - patch) / 2;
    return static_cast<int>(std::floor(static_cast<double>(i) * (extent - patch) / (grid - 1) + 0.5));
  };
  std::vector<ScanCoord> out;
  for (int r = 0; r < grid; ++r) {
    for (int c = 0; c < grid; ++c) out.push_back({axis(width, c), axis(height, r)});
  }
  return out;
}

LabelModel classifier_model(const Classifier& g) {
  return [&g](const MaskedImage& x) { return classify(g, x); };
}

LabelModel binary_target(LabelModel g, int k) {
  return [g = std::move(g), k](const MaskedImage& x) {
    const auto p = g(x);
    const double pk = p.at(static_cast<std::size_t>(k));
    return std::vector<double>{pk, 1.0 - pk};
  };
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double eig_from_posteriors(std::span<const std::vector<double>> posteriors, std::span<const double> weights) {
  if (posteriors.empty()) throw numeric_error("empty_samples", "EIG needs at least one completion");
  if (!weights.empty() && weights.size() != posteriors.size()) {
    throw numeric_error("shape_mismatch", "weights and completions differ in count");
  }
  const std::size_t K = posteriors[0].size();
  const double uniform = 1.0 / static_cast<double>(posteriors.size());
  std::vector<double> mix(K, 0.0);
  double mean_h = 0.0;
  for (std::size_t n = 0; n < posteriors.size(); ++n) {
    if (posteriors[n].size() != K) throw numeric_error("shape_mismatch", "posteriors differ in class count");
    const double w = weights.empty() ? uniform : weights[n];
    for (std::size_t k = 0; k < K; ++k) mix[k] += w * posteriors[n][k];
    mean_h += w * entropy(posteriors[n]);
  }
  return entropy(mix) - mean_h;
}

MaskedImage reveal(const ImageGrid& image, std::span<const ScanCoord> scans, ScanCoord candidate, int patch) {
  std::vector<ScanCoord> all(scans.begin(), scans.end());
  all.push_back(candidate);
  return apply_mask(image, mask_from_scans(all, patch, image.height, image.width));
}

double eig_estimate(const LabelModel& g, std::span<const ImageGrid> completions,
                    std::span<const ScanCoord> scans, ScanCoord candidate, int patch,
                    std::span<const double> weights) {
  return eig_from_posteriors(posteriors_at(g, completions, scans, candidate, patch), weights);
}

double epe_estimate(const LabelModel& g, const MaskedImage& current, std::span<const ImageGrid> completions,
                    std::span<const ScanCoord> scans, ScanCoord candidate, int patch) {
  const auto post = posteriors_at(g, completions, scans, candidate, patch);
  double mean_h = 0.0;
  for (const auto& p : post) mean_h += entropy(p);
  return entropy(g(current)) - mean_h / static_cast<double>(post.size());
}

double ig_per_sample(const LabelModel& g, std::span<const ImageGrid> completions,
                     std::span<const ScanCoord> scans, ScanCoord candidate, int patch, std::size_t n) {
  if (n >= completions.size()) throw numeric_error("bad_index", "completion index out of range");
  const auto post = posteriors_at(g, completions, scans, candidate, patch);
  std::vector<double> mix(post[0].size(), 0.0);
  for (const auto& p : post) {
    for (std::size_t k = 0; k < p.size(); ++k) mix[k] += p[k] / static_cast<double>(post.size());
  }
  return entropy(mix) - entropy(post[n]);
}

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::eig: return "eig";
    case Strategy::epe: return "epe";
    case Strategy::random: return "random";
    case Strategy::uncond: return "uncond";
    case Strategy::nongreedy_uncond: return "nongreedy";
  }
  return "?";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "eig") return Strategy::eig;
  if (s == "epe") return Strategy::epe;
  if (s == "random") return Strategy::random;
  if (s == "uncond") return Strategy::uncond;
  if (s == "nongreedy" || s == "nongreedy_uncond") return Strategy::nongreedy_uncond;
  throw config_error("bad_strategy", "unknown strategy '" + std::string(s) + "'");
}

Choice select_next(Strategy strategy, const Context& ctx, EpisodeState& state, Rng& rng) {
  const ScanWorld& w = *ctx.world;
  const LabelModel& g = *ctx.g;
  const std::vector<ScanCoord> coords = w.candidates();
  const std::vector<int> avail = available_cells(w, state);
  if (avail.empty()) throw config_error("exhausted_candidates", "every candidate cell has been scanned");

  Choice out;
  out.map.grid = w.grid;
  out.map.values.assign(static_cast<std::size_t>(w.cells()), 0.0);
  out.map.available.assign(static_cast<std::size_t>(w.cells()), false);
  for (int c : avail) out.map.available[static_cast<std::size_t>(c)] = true;

  auto pick_max = [&]() {
    int best = -1;
    for (int c : avail) {
      if (best < 0 || out.map.values[static_cast<std::size_t>(c)] > out.map.values[static_cast<std::size_t>(best)]) best = c;
    }
    return best;
  };

  switch (strategy) {
    case Strategy::eig:
    case Strategy::epe: {
      if (ctx.complete == nullptr || !state.observed) {
        throw config_error("missing_completer", "eig/epe need a completion model and an observation");
      }
      std::vector<ImageGrid> comps;
      for (int n = 0; n < w.completions; ++n) comps.push_back((*ctx.complete)(*state.observed, rng));
      for (int c : avail) {
        const ScanCoord cand = coords[static_cast<std::size_t>(c)];
        out.map.values[static_cast<std::size_t>(c)] =
            strategy == Strategy::eig ? eig_estimate(g, comps, state.scans, cand, w.patch)
                                      : epe_estimate(g, *state.observed, comps, state.scans, cand, w.patch);
      }
      out.cell = pick_max();
      break;
    }
    case Strategy::uncond: {
      const std::vector<ImageGrid> samples = draw_pool(ctx.pool, w.completions, rng);
      for (int c : avail) {
        out.map.values[static_cast<std::size_t>(c)] =
            eig_estimate(g, samples, state.scans, coords[static_cast<std::size_t>(c)], w.patch);
      }
      out.cell = pick_max();
      break;
    }
    case Strategy::random:
      out.cell = avail[rng.below(avail.size())];
      break;
    case Strategy::nongreedy_uncond: {
      if (state.plan.empty()) {
        const int len = std::min(w.horizon, w.cells());
        const std::vector<ImageGrid> samples = draw_pool(ctx.pool, w.completions, rng);
        // Mixture entropy before any scan minus mean entropy after the whole sequence.
        std::vector<double> mix;
        for (const auto& img : samples) {
          const auto p = g(apply_mask(img, Mask::zeros(img.height, img.width)));
          if (mix.empty()) mix.assign(p.size(), 0.0);
          for (std::size_t k = 0; k < p.size(); ++k) mix[k] += p[k] / static_cast<double>(samples.size());
        }
        const double prior_h = entropy(mix);
        double best_value = 0.0;
        for (int s = 0; s < w.cells(); ++s) {
          std::vector<int> cells(static_cast<std::size_t>(w.cells()));
          std::iota(cells.begin(), cells.end(), 0);
          for (int i = 0; i < len; ++i) {
            const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(w.cells() - i));
            std::swap(cells[static_cast<std::size_t>(i)], cells[j]);
          }
          cells.resize(static_cast<std::size_t>(len));
          std::vector<ScanCoord> seq;
          for (int c : cells) seq.push_back(coords[static_cast<std::size_t>(c)]);
          const ScanCoord last = seq.back();
          seq.pop_back();
          double mean_h = 0.0;
          for (const auto& p : posteriors_at(g, samples, seq, last, w.patch)) mean_h += entropy(p);
          const double v = prior_h - mean_h / static_cast<double>(samples.size());
          if (state.plan.empty() || v > best_value) {
            best_value = v;
            state.plan = cells;
          }
        }
      }
      const std::size_t t = state.cells.size();
      if (t >= state.plan.size()) throw config_error("exhausted_candidates", "committed sequence is exhausted");
      out.cell = state.plan[t];
      break;
    }
  }
  out.coord = coords[static_cast<std::size_t>(out.cell)];
  out.map.chosen = out.cell;
  return out;
}

ScanEpisode run_episode(Strategy strategy, const Context& ctx, const ImageGrid& image, Rng& rng) {
  ctx.world->validate();
  if (image.height != ctx.world->height || image.width != ctx.world->width) {
    throw numeric_error("shape_mismatch", "episode image does not match the scan world");
  }
  ScanEpisode ep;
  ep.strategy = strategy;
  ep.true_label = image.label;
  EpisodeState state;
  state.observed = apply_mask(image, Mask::zeros(image.height, image.width));
  ep.prior_posterior = (*ctx.g)(*state.observed);
  for (int t = 1; t <= ctx.world->horizon; ++t) {
    Choice ch = select_next(strategy, ctx, state, rng);
    state.scans.push_back(ch.coord);
    state.cells.push_back(ch.cell);
    const Mask m = mask_from_scans(state.scans, ctx.world->patch, image.height, image.width);
    state.observed = apply_mask(image, m);
    StepRecord rec;
    rec.step = t;
    rec.coord = ch.coord;
    rec.cell = ch.cell;
    rec.utility = ch.map.values[static_cast<std::size_t>(ch.cell)];
    rec.posterior = (*ctx.g)(*state.observed);
    rec.entropy = entropy(rec.posterior);
    rec.map = std::move(ch.map);
    ep.steps.push_back(std::move(rec));
    ep.mask = m;
  }
  return ep;
}

double binary_auroc(std::span<const double> scores, std::span<const int> positive) {
  if (scores.size() != positive.size()) throw numeric_error("shape_mismatch", "scores and labels differ in count");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(scores.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double n_pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (positive[i]) {
      n_pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double n_neg = static_cast<double>(scores.size()) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) throw numeric_error("auroc_undefined", "AUROC needs positives and negatives");
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double macro_auroc(std::span<const std::vector<double>> posteriors, std::span<const int> labels) {
  if (posteriors.size() != labels.size() || posteriors.empty()) {
    throw numeric_error("shape_mismatch", "posteriors and labels differ in count");
  }
  const std::size_t K = posteriors[0].size();
  double total = 0.0;
  int used = 0;
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> s;
    std::vector<int> pos;
    int np = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      s.push_back(posteriors[i][k]);
      pos.push_back(labels[i] == static_cast<int>(k) ? 1 : 0);
      np += pos.back();
    }
    if (np == 0 || np == static_cast<int>(labels.size())) continue;
    total += binary_auroc(s, pos);
    ++used;
  }
  if (used < 2) throw numeric_error("auroc_undefined", "macro AUROC needs at least two classes present");
  return total / used;
}

SummaryRow summarize_step(std::string strategy, int step, std::span<const std::vector<double>> posteriors,
                          std::span<const int> labels) {
  SummaryRow row;
  row.strategy = std::move(strategy);
  row.step = step;
  row.episodes = posteriors.size();
  row.auroc = macro_auroc(posteriors, labels);
  double hits = 0.0, nll = 0.0;
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    hits += argmax(posteriors[i]) == labels[i] ? 1.0 : 0.0;
    nll -= std::log(std::max(posteriors[i][static_cast<std::size_t>(labels[i])], 1e-300));
  }
  row.accuracy = hits / static_cast<double>(posteriors.size());
  row.nll = nll / static_cast<double>(posteriors.size());
  return row;
}

Evaluation evaluate_strategies(const Context& ctx, const Dataset& test, std::span<const Strategy> strategies,
                               int max_episodes, std::uint64_t seed, int threads) {
  ctx.world->validate();
  const int count = std::min(max_episodes, static_cast<int>(test.images.size()));
  if (count < 1) throw config_error("empty_dataset", "no test images for episodes");
  std::vector<int> labels;
  for (int i = 0; i < count; ++i) labels.push_back(test.images[static_cast<std::size_t>(i)].label);

  Evaluation ev;
  for (Strategy s : strategies) {
    std::vector<ScanEpisode> eps(static_cast<std::size_t>(count));
    parallel_for(count, threads, [&](int i) {
      Rng rng = Rng::stream(seed, "boed.episode", static_cast<std::uint64_t>(i));
      eps[static_cast<std::size_t>(i)] = run_episode(s, ctx, test.images[static_cast<std::size_t>(i)], rng);
    });
    for (int t = 0; t <= ctx.world->horizon; ++t) {
      std::vector<std::vector<double>> post;
      for (const auto& e : eps) post.push_back(t == 0 ? e.prior_posterior : e.steps[static_cast<std::size_t>(t - 1)].posterior);
      ev.rows.push_back(summarize_step(std::string(strategy_name(s)), t, post, labels));
    }
    ev.episodes.push_back(std::move(eps));
  }
  std::vector<std::vector<double>> full;
  for (int i = 0; i < count; ++i) {
    const ImageGrid& img = test.images[static_cast<std::size_t>(i)];
    full.push_back((*ctx.g)(apply_mask(img, Mask::ones(img.height, img.width))));
  }
  for (int t = 0; t <= ctx.world->horizon; ++t) ev.rows.push_back(summarize_step("upper_bound", t, full, labels));
  return ev;
}

std::vector<std::vector<double>> cross_task_matrix(const Context& ctx, const Classifier& g, const Dataset& test,
                                                   int max_episodes, int step, std::uint64_t seed, int threads) {
  if (step < 1 || step > ctx.world->horizon) throw config_error("bad_step", "cross-task step outside 1..T");
  const int count = std::min(max_episodes, static_cast<int>(test.images.size()));
  const int K = g.classes;
  const LabelModel full = classifier_model(g);
  std::vector<std::vector<double>> matrix(static_cast<std::size_t>(K), std::vector<double>(static_cast<std::size_t>(K)));
  for (int a = 0; a < K; ++a) {
    const LabelModel target = binary_target(full, a);
    Context c = ctx;
    c.g = &target;
    std::vector<std::vector<double>> post(static_cast<std::size_t>(count));
    parallel_for(count, threads, [&](int i) {
      const ImageGrid& img = test.images[static_cast<std::size_t>(i)];
      Rng rng = Rng::stream(derive_seed(seed, "boed.cross", static_cast<std::uint64_t>(a)), "episode",
                            static_cast<std::uint64_t>(i));
      const ScanEpisode e = run_episode(Strategy::eig, c, img, rng);
      std::vector<ScanCoord> scans;
      for (int t = 0; t < step; ++t) scans.push_back(e.steps[static_cast<std::size_t>(t)].coord);
      post[static_cast<std::size_t>(i)] =
          classify(g, apply_mask(img, mask_from_scans(scans, ctx.world->patch, img.height, img.width)));
    });
    for (int b = 0; b < K; ++b) {
      std::vector<double> s;
      std::vector<int> pos;
      for (int i = 0; i < count; ++i) {
        s.push_back(post[static_cast<std::size_t>(i)][static_cast<std::size_t>(b)]);
        pos.push_back(test.images[static_cast<std::size_t>(i)].label == b ? 1 : 0);
      }
      const int np = static_cast<int>(std::count(pos.begin(), pos.end(), 1));
      matrix[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
          np == 0 || np == count ? std::numeric_limits<double>::quiet_NaN() : binary_auroc(s, pos);
    }
  }
  return matrix;
}

void write_episode_csv(const ScanEpisode& e, const std::filesystem::path& path) {
  auto out = open_out(path);
  const std::size_t K = e.prior_posterior.size();
  out << "step,x,y,strategy,eig,entropy,true_label";
  for (std::size_t k = 0; k < K; ++k) out << ",p" << k;
  out << '\n';
  for (const auto& s : e.steps) {
    out << s.step << ',' << s.coord.x << ',' << s.coord.y << ',' << strategy_name(e.strategy) << ','
        << s.utility << ',' << s.entropy << ',' << e.true_label;
    for (double p : s.posterior) out << ',' << p;
    out << '\n';
  }
  finish(out, path);
}

void write_summary_csv(std::span<const SummaryRow> rows, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "strategy,step,auroc,accuracy,nll,episodes\n";
  for (const auto& r : rows) {
    out << r.strategy << ',' << r.step << ',' << r.auroc << ',' << r.accuracy << ',' << r.nll << ','
        << r.episodes << '\n';
  }
  finish(out, path);
}

void write_eigmap_csv(const EigMap& m, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (int c = 0; c < m.grid; ++c) out << (c ? "," : "") << "col" << c;
  out << '\n';
  for (int r = 0; r < m.grid; ++r) {
    for (int c = 0; c < m.grid; ++c) out << (c ? "," : "") << m.values[static_cast<std::size_t>(r * m.grid + c)];
    out << '\n';
  }
  finish(out, path);
}

void write_eigmap_pgm(const EigMap& m, const std::filesystem::path& path) {
  GrayImage img;
  img.height = m.grid;
  img.width = m.grid;
  double hi = 0.0;
  for (double v : m.values) hi = std::max(hi, v);
  for (double v : m.values) {
    const double s = hi > 0.0 ? std::clamp(v / hi, 0.0, 1.0) : 0.0;
    img.pixels.push_back(static_cast<std::uint8_t>(std::lround(255.0 * s)));
  }
  write_pgm(img, path);
}

void write_matrix_csv(const std::vector<std::vector<double>>& m, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "scan_target";
  for (std::size_t b = 0; b < m.size(); ++b) out << ",score_" << b;
  out << '\n';
  for (std::size_t a = 0; a < m.size(); ++a) {
    out << a;
    for (double v : m[a]) out << ',' << v;
    out << '\n';
  }
  finish(out, path);
}

}  // namespace aipo::boed
