// SPDX-License-Identifier: Apache-2.0
#include "aipo/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "aipo/error.hpp"
#include "aipo/fileio.hpp"

namespace aipo {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end && !s.empty();
}

bool valid(RunConfig::Type type, const std::string& v) {
  switch (type) {
    case RunConfig::Type::integer: {
      int x;
      return parse_number(v, x);
    }
    case RunConfig::Type::u64: {
      std::uint64_t x;
      return parse_number(v, x);
    }
    case RunConfig::Type::real: {
      double x;
      return parse_number(v, x);
    }
    case RunConfig::Type::boolean:
      return v == "true" || v == "false" || v == "1" || v == "0";
    case RunConfig::Type::text:
      return true;
    case RunConfig::Type::int_list:
      for (const auto& part : split_list(v)) {
        int x;
        if (!parse_number(part, x)) return false;
      }
      return true;
    case RunConfig::Type::text_list:
      return true;
  }
  return false;
}

hvae::HeadKind head_kind(const std::string& s) {
  if (s == "mlp") return hvae::HeadKind::mlp;
  if (s == "linear") return hvae::HeadKind::linear;
  throw config_error("bad_value", "head kind must be mlp or linear, got '" + s + "'");
}

}  // namespace

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(trim(part));
  return out;
}

RunConfig::RunConfig() {
  using T = Type;
  declare("seed", T::u64, "0");
  declare("threads", T::integer, "1");

  declare("data.count", T::integer, "2000");
  declare("data.side", T::integer, "16");
  declare("data.classes", T::integer, "4");
  declare("data.train_frac", T::real, "0.8");

  declare("hvae.dims", T::int_list, "8,16");
  declare("hvae.hidden", T::integer, "128");
  declare("hvae.state", T::integer, "64");
  declare("hvae.feature", T::integer, "64");
  declare("hvae.model_heads", T::text, "mlp");
  declare("hvae.partial_heads", T::text, "mlp");

  declare("train.iterations", T::integer, "3000");
  declare("train.batch", T::integer, "32");
  declare("train.lr", T::real, "1e-3");
  declare("train.partial_lr", T::real, "3e-4");
  declare("train.skip_threshold", T::real, "1000");
  declare("train.freeze", T::text_list, "");
  declare("train.analytic_kl", T::boolean, "false");
  declare("train.kl_warmup", T::integer, "1000");
  declare("train.val_every", T::integer, "0");

  declare("mask.side_frac", T::real, "0.35");
  declare("mask.n_max", T::integer, "5");
  declare("mask.holes", T::boolean, "false");

  declare("classifier.hidden", T::integer, "64");
  declare("classifier.iterations", T::integer, "3000");
  declare("classifier.batch", T::integer, "32");
  declare("classifier.lr", T::real, "1e-3");
  declare("classifier.max_patches", T::integer, "5");
  declare("classifier.full_share", T::real, "0.5");

  declare("world.patch", T::integer, "4");
  declare("world.grid", T::integer, "5");
  declare("world.horizon", T::integer, "5");
  declare("world.completions", T::integer, "10");

  declare("eval.pairs", T::integer, "1000");
  declare("eval.observations", T::integer, "10");
  declare("eval.n_max", T::integer, "5");
}

void RunConfig::declare(const std::string& key, Type type, std::string value) {
  types_.emplace(key, type);
  values_.emplace(key, std::move(value));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = types_.find(key);
  if (it == types_.end()) throw config_error("unknown_key", "unknown configuration key '" + key + "'");
  const std::string v = trim(value);
  if (!valid(it->second, v)) throw config_error("bad_value", "bad value '" + v + "' for key '" + key + "'");
  values_[key] = v;
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error("bad_line", origin + ":" + std::to_string(lineno) + ": expected key=value");
    }
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  load_text(std::string(bytes.begin(), bytes.end()), path.string());
}

const std::string& RunConfig::text(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw config_error("unknown_key", "unknown configuration key '" + key + "'");
  return it->second;
}

int RunConfig::integer(const std::string& key) const {
  int x = 0;
  parse_number(text(key), x);
  return x;
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  std::uint64_t x = 0;
  parse_number(text(key), x);
  return x;
}

double RunConfig::real(const std::string& key) const {
  double x = 0;
  parse_number(text(key), x);
  return x;
}

bool RunConfig::boolean(const std::string& key) const {
  const auto& v = text(key);
  return v == "true" || v == "1";
}

std::vector<int> RunConfig::int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& part : split_list(text(key))) {
    int x = 0;
    parse_number(part, x);
    out.push_back(x);
  }
  return out;
}

std::vector<std::string> RunConfig::text_list(const std::string& key) const { return split_list(text(key)); }

std::string RunConfig::render() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

void RunConfig::write_sidecar(const std::filesystem::path& path) const {
  const std::string s = render();
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

hvae::HvaeConfig RunConfig::hvae(int height, int width, int channels) const {
  hvae::HvaeConfig c;
  c.dims = int_list("hvae.dims");
  c.hidden = integer("hvae.hidden");
  c.state = integer("hvae.state");
  c.feature = integer("hvae.feature");
  c.height = height;
  c.width = width;
  c.channels = channels;
  c.model_heads = head_kind(text("hvae.model_heads"));
  c.partial_heads = head_kind(text("hvae.partial_heads"));
  c.validate();
  return c;
}

TrainConfig RunConfig::train(Objective objective) const {
  TrainConfig c;
  c.objective = objective;
  c.lr = objective == Objective::uncond ? real("train.lr") : real("train.partial_lr");
  c.batch = integer("train.batch");
  c.iterations = integer("train.iterations");
  c.skip_threshold = real("train.skip_threshold");
  c.freeze = text_list("train.freeze");
  c.analytic_kl = boolean("train.analytic_kl");
  c.kl_warmup = integer("train.kl_warmup");
  c.seed = derive_seed(u64("seed"), "train");
  c.threads = integer("threads");
  c.val_every = integer("train.val_every");
  c.validate();
  return c;
}

ClassifierConfig RunConfig::classifier() const {
  ClassifierConfig c;
  c.hidden = integer("classifier.hidden");
  c.iterations = integer("classifier.iterations");
  c.batch = integer("classifier.batch");
  c.lr = real("classifier.lr");
  c.scan_patch = integer("world.patch");
  c.max_patches = integer("classifier.max_patches");
  c.full_share = real("classifier.full_share");
  c.seed = derive_seed(u64("seed"), "train.classifier");
  c.validate();
  return c;
}

boed::ScanWorld RunConfig::world(int height, int width) const {
  boed::ScanWorld w;
  w.height = height;
  w.width = width;
  w.patch = integer("world.patch");
  w.grid = integer("world.grid");
  w.horizon = integer("world.horizon");
  w.completions = integer("world.completions");
  w.validate();
  return w;
}

}  // namespace aipo
