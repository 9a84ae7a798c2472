// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a flat set of dotted keys with typed values, read from
// "key = value" files ('#' starts a comment) and command-line overrides.
// Unknown keys and malformed values are configuration errors.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "aipo/boed.hpp"
#include "aipo/classifier.hpp"
#include "aipo/hvae.hpp"
#include "aipo/train.hpp"

namespace aipo {

class RunConfig {
 public:
  enum class Type { integer, u64, real, boolean, text, int_list, text_list };

  RunConfig();

  void set(const std::string& key, const std::string& value);
  /// Applies every assignment in a config file, in order.
  void load_file(const std::filesystem::path& path);
  /// Parses "key=value" text.
  void load_text(const std::string& text, const std::string& origin = "<text>");

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& text(const std::string& key) const;
  int integer(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  double real(const std::string& key) const;
  bool boolean(const std::string& key) const;
  std::vector<int> int_list(const std::string& key) const;
  std::vector<std::string> text_list(const std::string& key) const;

  /// Every key in sorted order, one "key=value" line each.
  std::string render() const;
  void write_sidecar(const std::filesystem::path& path) const;

  hvae::HvaeConfig hvae(int height, int width, int channels) const;
  TrainConfig train(Objective objective) const;
  ClassifierConfig classifier() const;
  boed::ScanWorld world(int height, int width) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  void declare(const std::string& key, Type type, std::string value);
  std::map<std::string, Type> types_;
  std::map<std::string, std::string> values_;
};

std::vector<std::string> split_list(const std::string& s, char sep = ',');

}  // namespace aipo
