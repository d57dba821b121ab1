// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Exit codes: 0 ok, 1 usage or config, 2 numeric, 3 I/O.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mdocc/app.hpp"
#include "mdocc/codec.hpp"
#include "mdocc/error.hpp"

namespace {

int exit_code(mdocc::ErrorCode c) {
  using mdocc::ErrorCode;
  switch (c) {
    case ErrorCode::DivergedLoss:
    case ErrorCode::InfeasibleCover:
      return 2;
    case ErrorCode::IoFailure:
    case ErrorCode::BadMagic:
    case ErrorCode::TruncatedPayload:
    case ErrorCode::VersionUnsupported:
      return 3;
    default:
      return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"mdocc: multi-dataset occupancy toolkit"};
  cli.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  for (const char* name : {"synth", "train", "learn-labels", "eval", "report"}) {
    auto* sub = cli.add_subcommand(name);
    sub->add_option("--config", config_path, "INI experiment config");
    sub->add_option("--seed", seed, "override [experiment] seed");
    sub->add_option("--out", out, "override [experiment] out");
  }

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    mdocc::app::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = mdocc::app::parse_config(mdocc::read_text(config_path));
    if (seed) cfg.seed = *seed;
    if (out) cfg.out = *out;
    cfg.validate();

    const std::string cmd = cli.get_subcommands().front()->get_name();
    if (cmd == "synth") {
      mdocc::app::cmd_synth(cfg);
    } else if (cmd == "train") {
      for (const auto& s : mdocc::app::cmd_train(cfg)) std::cout << "trained " << s << "\n";
    } else if (cmd == "learn-labels") {
      const auto u = mdocc::app::cmd_learn_labels(cfg);
      std::cout << "unified classes " << u.space.size() << ", objective " << u.objective << "\n";
    } else if (cmd == "eval") {
      std::cout << mdocc::metrics::report_csv(mdocc::app::cmd_eval(cfg));
    } else {
      std::cout << mdocc::app::trends_csv(mdocc::app::cmd_report(cfg));
    }
    return 0;
  } catch (const mdocc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
