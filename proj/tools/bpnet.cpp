// bpnet: synthetic data generation, training, evaluation and ablations.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "bpnet/commands.hpp"

namespace {

int report(bpnet::ErrorCode code, const std::string& message) {
  std::string line = message;
  for (char& c : line) {
    if (c == '\n') c = ' ';
  }
  std::cerr << "error: " << bpnet::error_code_name(code) << ": " << line << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boundary proposal network for natural language video localization"};
  app.require_subcommand(1);

  // gen-data
  bpnet::GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic dataset (manifest + feature files)");
  gen_cmd->add_option("--out", gen.out, "output directory (default: $BPNET_DATA_DIR)");
  gen_cmd->add_option("--seed", gen.synthesis.seed, "sample seed");
  gen_cmd->add_option("--world-seed", gen.synthesis.world_seed, "concept bank seed");
  gen_cmd->add_option("--n", gen.synthesis.n, "number of samples");
  gen_cmd->add_option("--t", gen.synthesis.frames, "frames per video");
  gen_cmd->add_option("--m", gen.synthesis.words, "words per query");
  gen_cmd->add_option("--dv", gen.synthesis.video_dim, "video feature dimension");
  gen_cmd->add_option("--dq", gen.synthesis.query_dim, "word feature dimension");
  gen_cmd->add_flag("!--no-distractor", gen.synthesis.distractor, "omit boundary-only distractor spans");

  // train
  bpnet::TrainOptions tr;
  std::optional<std::uint64_t> train_seed;
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint directory");
  train_cmd->add_option("--config", tr.config, "key = value config file");
  train_cmd->add_option("--data", tr.data, "training manifest (default: $BPNET_DATA_DIR/manifest.tsv)");
  train_cmd->add_option("--val", tr.validation, "validation manifest for early stopping");
  train_cmd->add_option("--embeddings", tr.embeddings, "word embedding table for text: queries");
  train_cmd->add_option("--out", tr.out, "checkpoint directory")->capture_default_str();
  train_cmd->add_option("--seed", train_seed, "overrides the config seed");

  // eval
  bpnet::EvalOptions ev;
  std::optional<std::string> eval_mode;
  std::optional<int> eval_n;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint directory")->capture_default_str();
  eval_cmd->add_option("--data", ev.data, "manifest (default: $BPNET_DATA_DIR/manifest.tsv)");
  eval_cmd->add_option("--embeddings", ev.embeddings, "word embedding table for text: queries");
  eval_cmd->add_option("--mode", eval_mode, "bpnet | anchor_free | anchor_based");
  eval_cmd->add_option("--n-proposals", eval_n, "stage-one candidates to rerank");
  eval_cmd->add_option("--out", ev.out, "write ranked candidate records here");
  eval_cmd->add_flag("--csv", ev.csv, "print the report as CSV");

  // ablate
  bpnet::AblateOptions ab;
  std::optional<std::uint64_t> ablate_seed;
  auto* ablate_cmd = app.add_subcommand("ablate", "train all variants on synthetic splits and compare");
  ablate_cmd->add_option("--config", ab.config, "key = value config file");
  ablate_cmd->add_option("--seed", ablate_seed, "overrides the config seed");
  ablate_cmd->add_option("--out", ab.out, "write the comparison as CSV");
  ablate_cmd->add_flag("--verbose", ab.verbose, "print per-epoch training logs");

  // windows
  bpnet::WindowsOptions win;
  auto* windows_cmd = app.add_subcommand("windows", "count sliding windows per length");
  windows_cmd->add_option("--t", win.frames, "frames")->capture_default_str();
  windows_cmd->add_option("--lengths", win.lengths, "comma-separated window lengths")->capture_default_str();
  windows_cmd->add_option("--overlap", win.overlap, "overlap fraction in [0, 1)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(bpnet::ErrorCode::kArgument, e.what());
  }

  try {
    if (*gen_cmd) {
      bpnet::cmd_gen_data(gen, std::cout);
    } else if (*train_cmd) {
      tr.seed = train_seed;
      bpnet::cmd_train(tr, std::cout);
    } else if (*eval_cmd) {
      ev.mode = eval_mode;
      ev.n_proposals = eval_n;
      bpnet::cmd_eval(ev, std::cout);
    } else if (*ablate_cmd) {
      ab.seed = ablate_seed;
      bpnet::cmd_ablate(ab, std::cout);
    } else if (*windows_cmd) {
      bpnet::cmd_windows(win, std::cout);
    }
  } catch (const bpnet::Error& e) {
    return report(e.code(), e.what());
  } catch (const std::exception& e) {
    return report(bpnet::ErrorCode::kIo, e.what());
  }
  return 0;
}
