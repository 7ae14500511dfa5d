// Command-line front end. Talks to the engine exclusively through the C API.
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "ocl/ocl.h"

namespace {

using json = nlohmann::json;

int fail(ocl_status status, const char* what) {
  std::cerr << what << " failed (" << status << "): " << ocl_last_error() << "\n";
  return 1;
}

void print_owned(char* text) {
  if (text == nullptr) return;
  const size_t len = std::strlen(text);
  std::cout << text;
  if (len > 0 && text[len - 1] != '\n') std::cout << "\n";
  ocl_string_free(text);
}

struct SynthOptions {
  std::string out_dir;
  uint32_t classes = 10;
  uint32_t dim = 32;
  uint32_t train_per_class = 100;
  uint32_t test_per_class = 50;
  double mean_scale = 10.0;
  double sigma = 1.0;
  uint32_t group_size = 10;
  uint64_t seed = 0;
};

int run_synth(const SynthOptions& opt) {
  const json params = {{"num_classes", opt.classes},
                       {"dim", opt.dim},
                       {"train_per_class", opt.train_per_class},
                       {"test_per_class", opt.test_per_class},
                       {"class_mean_scale", opt.mean_scale},
                       {"noise_sigma", opt.sigma},
                       {"group_size", opt.group_size},
                       {"seed", opt.seed}};
  std::error_code ec;
  std::filesystem::create_directories(opt.out_dir, ec);
  const std::string features = opt.out_dir + "/features.bin";
  const std::string manifest = opt.out_dir + "/manifest.csv";
  const ocl_status status = ocl_synthesize(params.dump().c_str(), features.c_str(),
                                           manifest.c_str());
  if (status != OCL_OK) return fail(status, "synth");
  std::cout << "wrote " << features << "\n";
  std::cout << "wrote " << manifest << "\n";
  return 0;
}

int run_ingest(const std::string& features, const std::string& manifest, const std::string& csv,
               const std::string& out_dir) {
  char* report = nullptr;
  if (!csv.empty()) {
    if (out_dir.empty()) {
      std::cerr << "ingest: --csv conversion needs --out DIR\n";
      return 1;
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    const std::string out_features = out_dir + "/features.bin";
    const std::string out_manifest = out_dir + "/manifest.csv";
    const ocl_status status =
        ocl_ingest_csv(csv.c_str(), out_features.c_str(), out_manifest.c_str(), &report);
    if (status != OCL_OK) return fail(status, "ingest");
    std::cout << "wrote " << out_features << "\n";
    std::cout << "wrote " << out_manifest << "\n";
    print_owned(report);
    return 0;
  }
  if (features.empty() || manifest.empty()) {
    std::cerr << "ingest: needs --features and --manifest (or --csv with --out)\n";
    return 1;
  }
  const ocl_status status = ocl_ingest_report(features.c_str(), manifest.c_str(), &report);
  if (status != OCL_OK) return fail(status, "ingest");
  print_owned(report);
  return 0;
}

int run_matrix_cmd(const std::string& config, uint32_t workers, bool force,
                   const std::string& out_dir, int64_t seed) {
  uint64_t executed = 0;
  uint64_t skipped = 0;
  uint64_t failed = 0;
  char* failures = nullptr;
  const ocl_status status =
      ocl_run_matrix(config.c_str(), workers, force ? 1 : 0,
                     out_dir.empty() ? nullptr : out_dir.c_str(), seed, &executed, &skipped,
                     &failed, &failures);
  if (status != OCL_OK) {
    ocl_string_free(failures);
    return fail(status, "run");
  }
  std::cout << "cells executed: " << executed << ", skipped: " << skipped
            << ", failed: " << failed << "\n";
  if (failed > 0) {
    std::cerr << "failed cells:\n";
    if (failures != nullptr) std::cerr << failures << "\n";
  }
  ocl_string_free(failures);
  return failed == 0 ? 0 : 1;
}

int run_netscore(double accuracy, double params, double seconds, double alpha, double beta,
                 double gamma, double scale, const std::string& records_path) {
  if (!records_path.empty()) {
    std::ifstream in(records_path);
    if (!in) {
      std::cerr << "netscore: cannot open " << records_path << "\n";
      return 1;
    }
    std::string line;
    std::printf("%-16s %-18s %-10s %10s %12s %10s %10s\n", "learner", "ordering", "backbone",
                "final_acc", "params", "seconds", "netscore");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded()) {
        std::cerr << "netscore: bad record line\n";
        return 1;
      }
      const double acc = j.at("final_acc").get<double>();
      const double p = j.at("params").get<double>();
      const double c = j.at("wall_seconds").get<double>();
      double omega = 0.0;
      const ocl_status status = ocl_netscore(acc, p, c, alpha, beta, gamma, scale, &omega);
      if (status != OCL_OK) return fail(status, "netscore");
      std::printf("%-16s %-18s %-10s %10.2f %12.0f %10.4f %10.2f\n",
                  j.at("learner").get<std::string>().c_str(),
                  j.at("ordering").get<std::string>().c_str(),
                  j.at("backbone").at("name").get<std::string>().c_str(), acc, p, c, omega);
    }
    return 0;
  }
  double omega = 0.0;
  const ocl_status status =
      ocl_netscore(accuracy, params, seconds, alpha, beta, gamma, scale, &omega);
  if (status != OCL_OK) return fail(status, "netscore");
  std::printf("%.6f\n", omega);
  return 0;
}

int run_aggregate(const std::string& records_path, bool as_json) {
  char* tables_json = nullptr;
  char* tables_text = nullptr;
  const ocl_status status = ocl_aggregate(records_path.c_str(), &tables_json, &tables_text);
  if (status != OCL_OK) return fail(status, "aggregate");
  if (as_json) {
    print_owned(tables_json);
    ocl_string_free(tables_text);
  } else {
    print_owned(tables_text);
    ocl_string_free(tables_json);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming continual-learning benchmark engine"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ocl_version()));

  SynthOptions synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic Gaussian dataset");
  synth_cmd->add_option("--out", synth.out_dir, "output directory")->required();
  synth_cmd->add_option("--classes", synth.classes, "number of classes");
  synth_cmd->add_option("--dim", synth.dim, "feature dimension");
  synth_cmd->add_option("--train-per-class", synth.train_per_class, "train samples per class");
  synth_cmd->add_option("--test-per-class", synth.test_per_class, "test samples per class");
  synth_cmd->add_option("--mean-scale", synth.mean_scale, "norm of class means");
  synth_cmd->add_option("--sigma", synth.sigma, "noise standard deviation");
  synth_cmd->add_option("--group-size", synth.group_size, "samples per pseudo-video group");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");

  std::string ingest_features, ingest_manifest, ingest_csv, ingest_out;
  CLI::App* ingest_cmd = app.add_subcommand("ingest", "validate or convert feature datasets");
  ingest_cmd->add_option("--features", ingest_features, "feature file to validate");
  ingest_cmd->add_option("--manifest", ingest_manifest, "manifest to validate");
  ingest_cmd->add_option("--csv", ingest_csv,
                         "convert a csv (split,class_id,group_id,v0,...) instead");
  ingest_cmd->add_option("--out", ingest_out, "output directory for conversion");

  std::string run_config, run_out;
  uint32_t run_workers = 0;
  int64_t run_seed = -1;
  bool run_force = false;
  CLI::App* run_cmd = app.add_subcommand("run", "execute the experiment matrix from a config");
  run_cmd->add_option("--config", run_config, "experiment config JSON")->required();
  run_cmd->add_option("--workers", run_workers, "parallel cells (0 = config value)");
  run_cmd->add_option("--seed", run_seed, "base seed override (-1 = config value)");
  run_cmd->add_option("--out", run_out, "output directory override");
  run_cmd->add_flag("--force", run_force, "rerun cells already recorded");

  double ns_accuracy = 0.0, ns_params = 0.0, ns_seconds = 0.0;
  double ns_alpha = 2.0, ns_beta = 0.25, ns_gamma = 0.25, ns_scale = 20.0;
  std::string ns_records;
  CLI::App* ns_cmd = app.add_subcommand("netscore", "score an (accuracy, params, seconds) triplet");
  ns_cmd->add_option("--accuracy", ns_accuracy, "final accuracy in percent");
  ns_cmd->add_option("--params", ns_params, "total parameter count");
  ns_cmd->add_option("--seconds", ns_seconds, "wall-clock seconds");
  ns_cmd->add_option("--alpha", ns_alpha, "accuracy exponent");
  ns_cmd->add_option("--beta", ns_beta, "parameter exponent");
  ns_cmd->add_option("--gamma", ns_gamma, "compute exponent");
  ns_cmd->add_option("--scale", ns_scale, "leading scale");
  ns_cmd->add_option("--records", ns_records, "score every record in a records.jsonl instead");

  std::string agg_records;
  bool agg_json = false;
  CLI::App* agg_cmd = app.add_subcommand("aggregate", "rebuild tables from recorded results");
  agg_cmd->add_option("--records", agg_records, "records.jsonl path")->required();
  agg_cmd->add_flag("--json", agg_json, "emit JSON instead of text tables");

  CLI11_PARSE(app, argc, argv);

  if (synth_cmd->parsed()) return run_synth(synth);
  if (ingest_cmd->parsed()) {
    return run_ingest(ingest_features, ingest_manifest, ingest_csv, ingest_out);
  }
  if (run_cmd->parsed()) {
    return run_matrix_cmd(run_config, run_workers, run_force, run_out, run_seed);
  }
  if (ns_cmd->parsed()) {
    return run_netscore(ns_accuracy, ns_params, ns_seconds, ns_alpha, ns_beta, ns_gamma, ns_scale,
                        ns_records);
  }
  if (agg_cmd->parsed()) return run_aggregate(agg_records, agg_json);
  return 1;
}
