// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end for the groundsim shared library. Only the C API is
// used here; everything else lives behind libgroundsim.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "groundsim/groundsim.h"

namespace {

struct StringDeleter {
  void operator()(char* s) const { gs_string_free(s); }
};
using CString = std::unique_ptr<char, StringDeleter>;

struct ConfigDeleter {
  void operator()(gs_config* c) const { gs_config_free(c); }
};
using Config = std::unique_ptr<gs_config, ConfigDeleter>;

[[noreturn]] void die(const std::string& context) {
  std::fprintf(stderr, "error: %s: %s\n", context.c_str(), gs_last_error());
  std::exit(1);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::string token;
  for (size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ',') {
      if (!token.empty()) {
        // "a-b" expands to the inclusive range.
        const size_t dash = token.find('-');
        if (dash != std::string::npos && dash > 0) {
          const std::uint64_t lo = std::stoull(token.substr(0, dash));
          const std::uint64_t hi = std::stoull(token.substr(dash + 1));
          for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
        } else {
          seeds.push_back(std::stoull(token));
        }
        token.clear();
      }
    } else if (!std::isspace(static_cast<unsigned char>(text[i]))) {
      token += text[i];
    }
  }
  return seeds;
}

Config load_config(const std::string& path, const std::string& method,
                   const std::string& seeds) {
  gs_config* raw = nullptr;
  if (gs_config_load(path.c_str(), &raw) != GS_OK) die("loading '" + path + "'");
  Config config(raw);
  if (!method.empty() && gs_config_set_method(config.get(), method.c_str()) != GS_OK) {
    die("setting method");
  }
  if (!seeds.empty()) {
    const std::vector<std::uint64_t> list = parse_seed_list(seeds);
    if (gs_config_set_seeds(config.get(), list.data(), list.size()) != GS_OK) {
      die("setting seeds");
    }
  }
  return config;
}

int run_one(const Config& config, const std::string& out_dir, bool quiet) {
  char* manifest = nullptr;
  if (gs_run_experiment(config.get(), out_dir.c_str(), quiet ? 1 : 0, &manifest) != GS_OK) {
    die("running experiment");
  }
  CString manifest_owned(manifest);
  if (!quiet) std::printf("%s", manifest_owned.get());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"groundsim: simulator grounding experiments (gat / rgat / ane)"};
  app.require_subcommand(1);

  std::string config_path, out_dir, method, seeds;
  bool quiet = false;

  // run: one config into one output directory.
  CLI::App* run = app.add_subcommand("run", "run one experiment config");
  run->add_option("--config", config_path, "config file (JSON)")->required();
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--seeds", seeds, "seed list override, e.g. 0,1,2 or 0-9");
  run->add_option("--method", method, "method override (rgat|gat|ane|sim_only|real_only)");
  run->add_flag("--quiet", quiet, "suppress progress output");

  // sweep: config x seed matrix, one subdirectory per cell.
  std::vector<std::string> sweep_configs;
  CLI::App* sweep = app.add_subcommand("sweep", "run a config x seed matrix");
  sweep->add_option("--configs", sweep_configs, "config files")->required()->delimiter(',');
  sweep->add_option("--out", out_dir, "output root directory")->required();
  sweep->add_option("--seeds", seeds, "seed list, e.g. 0-9")->required();
  sweep->add_option("--method", method, "method override for every cell");
  sweep->add_flag("--quiet", quiet, "suppress progress output");

  // summarize: per-method learning-curve table across run dirs.
  std::vector<std::string> run_dirs;
  std::string summary_csv;
  CLI::App* summarize = app.add_subcommand("summarize", "aggregate run directories");
  summarize->add_option("--runs", run_dirs, "run directories")->required()->delimiter(',');
  summarize->add_option("--out", summary_csv, "also write the summary as CSV");

  // precision: re-export transformer scatter data for a checkpoint.
  std::string checkpoint_dir, precision_csv;
  int n_samples = 500;
  std::uint64_t precision_seed = 0;
  bool has_precision_seed = false;
  CLI::App* precision = app.add_subcommand("precision", "export a_hat-vs-a samples");
  precision->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  precision->add_option("--out", precision_csv, "output CSV path")->required();
  precision->add_option("--samples", n_samples, "number of samples");
  precision
      ->add_option("--seed", precision_seed,
                   "sampling seed (default: replay the run's own stream)")
      ->each([&](const std::string&) { has_precision_seed = true; });

  // oracle: train the real_only reference policy.
  CLI::App* oracle = app.add_subcommand("oracle", "train the real_only reference");
  oracle->add_option("--config", config_path, "config file (JSON)")->required();
  oracle->add_option("--out", out_dir, "output directory")->required();
  oracle->add_option("--seeds", seeds, "seed list override");
  oracle->add_flag("--quiet", quiet, "suppress progress output");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    return run_one(load_config(config_path, method, seeds), out_dir, quiet);
  }

  if (sweep->parsed()) {
    const std::vector<std::uint64_t> seed_list = parse_seed_list(seeds);
    if (seed_list.empty()) {
      std::fprintf(stderr, "error: sweep: empty seed list\n");
      return 1;
    }
    for (const std::string& cfg_path : sweep_configs) {
      const std::string stem = std::filesystem::path(cfg_path).stem().string();
      for (std::uint64_t seed : seed_list) {
        Config config = load_config(cfg_path, method, std::to_string(seed));
        const std::string cell_dir =
            (std::filesystem::path(out_dir) / (stem + "_seed" + std::to_string(seed)))
                .string();
        run_one(config, cell_dir, quiet);
        if (!quiet) std::printf("completed %s\n", cell_dir.c_str());
      }
    }
    return 0;
  }

  if (summarize->parsed()) {
    std::vector<const char*> dirs;
    dirs.reserve(run_dirs.size());
    for (const std::string& d : run_dirs) dirs.push_back(d.c_str());
    char* csv = nullptr;
    char* text = nullptr;
    if (gs_summarize(dirs.data(), dirs.size(), &csv, &text) != GS_OK) die("summarize");
    CString csv_owned(csv), text_owned(text);
    std::printf("%s", text_owned.get());
    if (!summary_csv.empty()) {
      std::ofstream out(summary_csv, std::ios::binary);
      out << csv_owned.get();
    }
    return 0;
  }

  if (precision->parsed()) {
    const std::uint64_t* seed_ptr = has_precision_seed ? &precision_seed : nullptr;
    if (gs_export_precision(checkpoint_dir.c_str(), precision_csv.c_str(), n_samples,
                            seed_ptr) != GS_OK) {
      die("precision export");
    }
    return 0;
  }

  if (oracle->parsed()) {
    Config config = load_config(config_path, "real_only", seeds);
    return run_one(config, out_dir, quiet);
  }

  return 0;
}
