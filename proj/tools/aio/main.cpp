// aio: generate | train | eval | track | grad-check

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "app.hpp"
#include "diagnostics.hpp"

namespace app = aio::app;
namespace fs = std::filesystem;

namespace {

aio::BBox parse_box(const std::string& text) {
  double v[4];
  char tail = 0;
  if (std::sscanf(text.c_str(), "%lf,%lf,%lf,%lf%c", &v[0], &v[1], &v[2], &v[3], &tail) != 4)
    throw aio::ParseError("--init-box expects x,y,w,h, got '" + text + "'");
  if (!(v[2] > 0 && v[3] > 0)) throw aio::ContractError("--init-box needs positive width and height");
  return aio::BBox::from_xywh(v[0], v[1], v[2], v[3]);
}

int fail(const std::string& kind, const std::string& msg) {
  std::string line = msg;
  for (auto& c : line)
    if (c == '\n') c = ' ';
  std::cerr << "error: " << kind << ": " << line << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Vision-language tracking at desk scale"};
  cli.require_subcommand(1);
  cli.set_help_all_flag("--help-all", "Show help for every command");

  std::optional<std::string> config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  const auto common = [&](CLI::App* c) {
    c->add_option("--config", config_file, "key=value config file");
    c->add_option("--seed", seed, "seed (overrides the config file and AIO_SEED)");
    c->add_option("settings", overrides, "key=value overrides")->check([](const std::string& s) {
      return s.find('=') == std::string::npos ? std::string("expected key=value") : std::string();
    });
  };
  const auto config = [&] {
    auto kv = overrides;
    if (seed) kv.push_back("seed=" + std::to_string(*seed));
    return app::build_config(config_file ? std::optional<fs::path>(*config_file) : std::nullopt, kv);
  };

  // generate
  app::GenerateArgs gen;
  gen.out = "data";
  auto* g = cli.add_subcommand("generate", "Write the synthetic dataset");
  g->add_option("--out", gen.out, "output directory")->capture_default_str();
  std::optional<std::uint64_t> gen_seed;
  g->add_option("--seed", gen_seed, "dataset seed (default: AIO_SEED or 0)");
  g->add_option("--train", gen.data.train, "training sequences")->capture_default_str();
  g->add_option("--eval", gen.data.eval, "evaluation sequences")->capture_default_str();
  g->add_option("--frames", gen.data.frames, "frames per sequence")->capture_default_str();
  g->add_option("--canvas", gen.data.canvas, "frame side in pixels")->capture_default_str();
  std::size_t twin_suite = 0;
  g->add_option("--twin-suite", twin_suite, "twin-distractor evaluation sequences")
      ->expected(0, 1)
      ->default_str("8");
  g->add_flag("--force", gen.force, "overwrite a non-empty output directory");

  // train
  app::TrainArgs tr;
  std::string train_out = "runs/train";
  std::optional<std::int64_t> iters;
  std::optional<std::string> ablate;
  auto* t = cli.add_subcommand("train", "Train a model");
  common(t);
  t->add_option("--out", train_out, "run directory")->capture_default_str();
  t->add_option("--iters", iters, "training iterations");
  t->add_option("--ablate", ablate, "no-mma: zero alignment weights; no-language: vision-only model")
      ->check(CLI::IsMember({"no-mma", "no-language"}));
  t->add_flag("--resume", tr.resume, "continue from the latest checkpoint in --out");

  // eval
  app::EvalArgs ev;
  std::optional<std::string> checkpoint, eval_out;
  auto* e = cli.add_subcommand("eval", "One-pass evaluation with the five metrics");
  common(e);
  e->add_option("--checkpoint", checkpoint, "model checkpoint");
  e->add_option("--out", eval_out, "report directory");
  e->add_flag("--oracle-gt", ev.oracle_gt, "score the ground truth against itself");

  // track
  app::TrackArgs tk;
  std::string sequence, track_out = "pred.txt";
  std::optional<std::string> prompt, init_box;
  auto* k = cli.add_subcommand("track", "Track one sequence");
  common(k);
  k->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  k->add_option("--sequence", sequence, "sequence directory")->required();
  k->add_option("--prompt", prompt, "language prompt (default: nlp.txt)");
  k->add_option("--init-box", init_box, "x,y,w,h of frame 0 (default: first groundtruth line)");
  k->add_option("--out", track_out, "box file")->capture_default_str();

  // grad-check
  aio::diag::GradSuiteOptions gopt;
  std::optional<std::string> grad_json;
  auto* gc = cli.add_subcommand("grad-check", "Finite-difference check of every loss term (double precision)");
  common(gc);
  gc->add_option("--step", gopt.step, "central-difference step")->capture_default_str();
  gc->add_option("--tolerance", gopt.tolerance, "max relative error")->capture_default_str();
  gc->add_option("--samples", gopt.samples_per_tensor, "coordinates checked per parameter tensor")
      ->capture_default_str();
  gc->add_option("--json", grad_json, "write the report as JSON");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return cli.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return cli.exit(ex);
  } catch (const CLI::ParseError& ex) {
    return fail("usage", ex.what());
  }

  try {
    if (g->parsed()) {
      if (g->count("--twin-suite")) gen.data.twin = twin_suite ? twin_suite : 8;
      gen.data.seed = 0;
      aio::Config env;
      env.apply_environment();
      gen.data.seed = gen_seed ? *gen_seed : env.get_u64("seed");
      app::generate(gen, std::cout);
    } else if (t->parsed()) {
      if (iters) overrides.push_back("iters=" + std::to_string(*iters));
      if (ablate == "no-mma") {
        overrides.push_back("lambda_cma=0");
        overrides.push_back("lambda_ima=0");
      } else if (ablate == "no-language") {
        overrides.push_back("language=false");
        overrides.push_back("lambda_cma=0");
        overrides.push_back("lambda_ima=0");
      }
      tr.cfg = config();
      tr.out = train_out;
      app::train(tr, std::cout);
    } else if (e->parsed()) {
      if (checkpoint) ev.checkpoint = *checkpoint;
      if (eval_out) ev.out = *eval_out;
      if (ev.oracle_gt) {
        ev.cfg = config();
      } else {
        if (config_file) throw aio::ConfigError("eval takes its config from the checkpoint; pass key=value overrides");
        ev.overrides = overrides;
        if (seed) ev.overrides.push_back("seed=" + std::to_string(*seed));
      }
      app::evaluate(ev, std::cout);
    } else if (k->parsed()) {
      if (config_file) throw aio::ConfigError("track takes its config from the checkpoint; pass key=value overrides");
      tk.checkpoint = *checkpoint;
      tk.sequence = sequence;
      tk.prompt = prompt;
      if (init_box) tk.init = parse_box(*init_box);
      tk.out = track_out;
      tk.overrides = overrides;
      app::track(tk, std::cout);
      std::cout << "boxes " << track_out << '\n';
    } else if (gc->parsed()) {
      const auto cfg = config();
      std::istringstream text(cfg.dump());
      std::vector<std::pair<std::string, std::string>> kv;
      for (std::string line; std::getline(text, line);) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv.emplace_back(line.substr(0, eq), line.substr(eq + 1));
      }
      gopt.config = kv;
      const auto rep = aio::diag::run_grad_suite(gopt);
      std::cout << rep.text();
      if (grad_json) app::write_file(*grad_json, rep.json());
      if (!rep.passed) return fail("numeric", "gradient check failed: " + rep.first_failure());
    }
  } catch (const app::MissingCheckpoint& ex) {
    fail(ex.kind(), ex.what());
    return 2;
  } catch (const aio::diag::DiagnosticError& ex) {
    return fail(ex.kind, ex.what());
  } catch (const aio::Error& ex) {
    return fail(ex.kind(), ex.what());
  } catch (const std::exception& ex) {
    return fail("internal", ex.what());
  }
  return 0;
}
