#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "seekmark/dataset.hpp"
#include "seekmark/error.hpp"
#include "seekmark/experiment.hpp"

namespace fs = std::filesystem;
using namespace seekmark;

namespace {

// "@file" reads the argument from a file.
std::string inline_or_file(const std::string& arg) {
  if (!arg.empty() && arg[0] == '@') return read_text(arg.substr(1));
  return arg;
}

std::vector<double> parse_fprs(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("--fpr: not a number: '" + item + "'");
    }
  }
  return out;
}

fs::path default_out(const fs::path& in, const std::string& suffix) {
  return in.parent_path() / (in.stem().string() + suffix);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seekmark: watermark generation, detection, attacks and analysis on a toy model"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 0;
  bool seed_set = false;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::string out;
  app.add_option_function<std::uint64_t>(
         "--seed", [&](std::uint64_t s) { seed = s, seed_set = true; }, "Master seed override")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Output path (file or run directory)");

  std::string config_path;
  auto* gen = app.add_subcommand("generate", "Train the toy model and write wm/null corpora");
  gen->add_option("--config", config_path, "Experiment config (JSON)")->required();

  auto* run = app.add_subcommand("run", "Full pipeline: generate, attack, detect, calibrate, report");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();

  std::string data, scheme;
  std::uint32_t min_len = 20;
  bool dedup = false;
  auto* det = app.add_subcommand("detect", "Score a JSONL dataset");
  det->add_option("--data", data, "Dataset (JSONL)")->required();
  det->add_option("--scheme", scheme, "Scheme id or scheme JSON file; default: dataset header");
  det->add_option("--min-len", min_len, "Minimum WinMax span length")->check(CLI::PositiveNumber);
  det->add_flag("--dedup", dedup, "Score repeated (context, token) pairs once");

  std::string kind, params = "{}";
  auto* att = app.add_subcommand("attack", "Attack a dataset");
  att->add_option("--data", data, "Dataset (JSONL)")->required();
  att->add_option("--kind", kind, "Attack kind")
      ->required()
      ->check(CLI::IsMember({"scrub", "spoof", "copypaste"}));
  att->add_option("--params", params, "JSON object or @file");

  std::string null_path, fpr_list = "0.01,0.001";
  auto* cal = app.add_subcommand("calibrate", "Thresholds from a null corpus");
  cal->add_option("--null", null_path, "Null dataset (JSONL) or detection CSV")->required();
  cal->add_option("--fpr", fpr_list, "Comma-separated target FPRs");

  std::string grid;
  auto* ver = app.add_subcommand("verify-props", "Closed forms vs Monte Carlo over a grid");
  ver->add_option("--grid", grid, "Grid JSON object or @file");

  std::string run_dir;
  auto* rep = app.add_subcommand("report", "Summary tables for a run directory");
  rep->add_option("--run", run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gen || *run) {
      ExperimentConfig cfg = load_config(config_path);
      if (seed_set) cfg.master_seed = seed;
      if (!out.empty()) cfg.output_dir = out;
      if (*gen) {
        for (const auto& f : cmd_generate(cfg, workers)) std::cout << f.string() << "\n";
      } else {
        const RunManifest m = run_pipeline(cfg, workers);
        for (const auto& s : m.stages)
          std::printf("%-10s %8.2fs  %zu files\n", s.name.c_str(), s.seconds, s.files.size());
        std::cout << (fs::path(cfg.output_dir) / "report" / "summary.txt").string() << "\n";
      }
    } else if (*det) {
      const fs::path o = out.empty() ? default_out(data, ".detect.csv") : fs::path(out);
      std::cout << cmd_detect(data, scheme, o, workers, min_len, dedup).string() << "\n";
    } else if (*att) {
      const fs::path o = out.empty() ? default_out(data, "." + kind + ".jsonl") : fs::path(out);
      std::cout << cmd_attack(data, kind, inline_or_file(params), o, seed_set ? seed : 1, workers)
                       .string()
                << "\n";
    } else if (*cal) {
      const fs::path o = out.empty() ? default_out(null_path, ".calibration.csv") : fs::path(out);
      std::cout << cmd_calibrate(null_path, parse_fprs(fpr_list), o, workers).string() << "\n";
    } else if (*ver) {
      std::string g = inline_or_file(grid);
      if (seed_set) {
        // splice the seed override into the grid object
        const std::string body = g.empty() ? "{}" : g;
        const auto close = body.rfind('}');
        if (close == std::string::npos) throw ValidationError("grid: expected an object");
        const bool empty_obj = body.find_first_not_of(" \t\r\n{", body.find('{')) == close;
        g = body.substr(0, close) + (empty_obj ? "" : ",") + "\"seed\":" + std::to_string(seed) +
            "}";
      }
      const fs::path o = out.empty() ? fs::path("propositions.csv") : fs::path(out);
      std::cout << cmd_verify_props(g, o, workers).string() << "\n";
    } else if (*rep) {
      for (const auto& f : cmd_report(run_dir)) std::cout << f.string() << "\n";
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
