#include "app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "aio/data/dataset.hpp"
#include "aio/data/hash.hpp"
#include "aio/pipeline/track.hpp"
#include "aio/pipeline/train.hpp"
#include "json.hpp"

namespace aio::app {

namespace {
constexpr std::uint64_t kModelTag = 0x6d6f64656cULL;  // "model"
}

void write_file(const fs::path& file, const std::string& text) {
  const auto tmp = fs::path(file.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    f << text;
    if (!f) throw IoError("cannot write " + file.string());
  }
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec) throw IoError("cannot write " + file.string() + ": " + ec.message());
}

std::string read_file(const fs::path& file) {
  std::ifstream f(file, std::ios::binary);
  if (!f) throw IoError("cannot read " + file.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void apply_overrides(Config& cfg, const std::vector<std::string>& overrides) {
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
}

Config build_config(const std::optional<fs::path>& file, const std::vector<std::string>& overrides) {
  Config cfg = file ? Config::load(*file) : Config();
  cfg.apply_environment();
  apply_overrides(cfg, overrides);
  return cfg;
}

Vocab resolve_vocab(const Config& cfg) {
  if (!cfg.get("vocab").empty()) return Vocab::load(cfg.get("vocab"));
  const auto candidate = fs::path(cfg.get("data_root")) / "vocab.txt";
  if (fs::exists(candidate)) return Vocab::load(candidate);
  return grammar_vocab();
}

GenerateResult generate(const GenerateArgs& args, std::ostream& log) {
  std::error_code ec;
  if (fs::exists(args.out) && !fs::is_empty(args.out, ec)) {
    if (!args.force) throw IoError(args.out.string() + " is not empty (use --force to overwrite)");
    fs::remove_all(args.out, ec);
    if (ec) throw IoError("cannot clear " + args.out.string() + ": " + ec.message());
  }
  const auto records = generate_dataset(args.out, args.data);
  GenerateResult r;
  for (const auto& rec : records) {
    r.sequence_hashes.emplace_back(rec.id, tree_digest(rec.dir));
    log << rec.id << ' ' << r.sequence_hashes.back().second << '\n';
  }
  r.digest = tree_digest(args.out);
  log << "dataset " << r.digest << '\n';
  return r;
}

namespace {

std::string checkpoint_name(std::uint64_t it) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "checkpoint_%06llu.aio", static_cast<unsigned long long>(it));
  return buf;
}

std::optional<fs::path> latest_checkpoint(const fs::path& dir) {
  std::optional<fs::path> best;
  if (!fs::is_directory(dir)) return best;
  std::vector<fs::path> found;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("checkpoint_", 0) == 0 && e.path().extension() == ".aio") found.push_back(e.path());
  }
  std::sort(found.begin(), found.end());
  if (!found.empty()) best = found.back();
  return best;
}

std::string loss_row(std::uint64_t it, const LossBreakdown& b) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", static_cast<unsigned long long>(it), b.total,
                b.cls, b.giou, b.l1, b.cma, b.ima);
  return buf;
}

constexpr const char* kLossHeader = "iter,L_total,L_cls,L_giou,L_1,L_cma,L_ima\n";

// Rows of an existing log up to and including `iteration`.
std::string truncate_log(const fs::path& file, std::uint64_t iteration) {
  std::string out = kLossHeader;
  if (!fs::exists(file)) return out;
  std::istringstream in(read_file(file));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (std::stoull(line.substr(0, line.find(','))) > iteration) break;
    out += line + "\n";
  }
  return out;
}

}  // namespace

TrainResult train(const TrainArgs& args, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  Config cfg = args.cfg;
  const auto vocab = resolve_vocab(cfg);
  const auto opt = TrainOptions::from(cfg);
  const auto mc = ModelConfig::from(cfg, vocab.size());

  std::error_code ec;
  fs::create_directories(args.out, ec);
  if (ec) throw IoError("cannot create " + args.out.string() + ": " + ec.message());

  Rng init_rng(mix_seed(opt.seed, kModelTag));
  TrainState st{Model::create(mc, init_rng), AdamW{}, 0};
  st.optimizer = AdamW(st.model.params, opt.optim);

  const auto log_file = args.out / "loss_log.csv";
  std::string log_text = kLossHeader;
  if (args.resume) {
    const auto latest = latest_checkpoint(args.out);
    if (!latest) throw MissingCheckpoint("no checkpoint to resume in " + args.out.string());
    const auto ck = read_checkpoint(*latest);
    require_compatible(ck.config(), cfg);
    ck.restore(st.model, &st.optimizer);
    st.iteration = ck.iteration;
    log_text = truncate_log(log_file, st.iteration);
    log << "resumed from " << latest->filename().string() << " at iteration " << st.iteration << '\n';
  }
  write_file(args.out / "config.txt", cfg.dump());
  write_file(log_file, log_text);

  const auto data = TrainingSet::load(cfg.get("data_root"), split_prefixes(cfg.get("train_split")),
                                      std::size_t(cfg.get_int("train_limit")), opt.twin_views);
  log << "training on " << data.videos << " videos (" << data.views.size() << " views), "
      << st.model.params.numel() << " parameters\n";

  std::ofstream loss_out(log_file, std::ios::app | std::ios::binary);
  TrainResult result;
  TrainHooks hooks;
  hooks.on_log = [&](std::uint64_t it, const LossBreakdown& b) {
    loss_out << loss_row(it, b);
    loss_out.flush();
    result.last = b;
    if (it % 100 == 0) log << "iter " << it << ' ' << b.str() << '\n';
  };
  hooks.on_checkpoint = [&](std::uint64_t it) {
    const auto ck = Checkpoint::capture(cfg, st.model, st.optimizer, it, iteration_rng(opt.seed, it).state());
    const auto file = args.out / checkpoint_name(it);
    write_checkpoint(file, ck);
  };
  train(st, data, vocab, opt, hooks);
  if (!loss_out) throw IoError("cannot write " + log_file.string());
  write_checkpoint(args.out / "final.aio", Checkpoint::capture(cfg, st.model, st.optimizer, st.iteration,
                                                               iteration_rng(opt.seed, st.iteration).state()));

  result.iterations = st.iteration;
  result.checkpoint = args.out / "final.aio";
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  nlohmann::ordered_json summary;
  summary["iterations"] = result.iterations;
  summary["seconds"] = result.seconds;
  summary["final_loss"] = {{"L_total", result.last.total}, {"L_cls", result.last.cls}, {"L_giou", result.last.giou},
                           {"L_1", result.last.l1},       {"L_cma", result.last.cma}, {"L_ima", result.last.ima}};
  write_file(args.out / "summary.json", summary.dump(2) + "\n");
  log << "checkpoint " << result.checkpoint.string() << '\n';
  log << "finished " << st.iteration << " iterations in " << result.seconds << " s\n";
  return result;
}

LoadedModel load_model(const fs::path& checkpoint, const std::vector<std::string>& overrides) {
  if (!fs::exists(checkpoint)) throw MissingCheckpoint("checkpoint not found: " + checkpoint.string());
  LoadedModel lm{read_checkpoint(checkpoint), Config(), Model()};
  const Config saved = lm.checkpoint.config();
  lm.cfg = saved;
  apply_overrides(lm.cfg, overrides);
  require_compatible(saved, lm.cfg);
  Rng unused(0);
  lm.model = Model::create(ModelConfig::from(lm.cfg, lm.checkpoint.vocab_size()), unused);
  lm.checkpoint.restore(lm.model, nullptr);
  return lm;
}

namespace {

Vocab checked_vocab(const Config& cfg, const Checkpoint& ck) {
  auto vocab = resolve_vocab(cfg);
  if (vocab.size() != ck.vocab_size()) {
    throw ConfigError("vocabulary has " + std::to_string(vocab.size()) + " ids but the checkpoint was trained with " +
                      std::to_string(ck.vocab_size()));
  }
  return vocab;
}

}  // namespace

int nearer_object(const BBox& pred, const BBox& target, const BBox& twin) {
  const auto d2 = [&](const BBox& b) { return (pred.cx - b.cx) * (pred.cx - b.cx) + (pred.cy - b.cy) * (pred.cy - b.cy); };
  return d2(twin) < d2(target) ? 1 : 0;
}

TwinSummary twin_disambiguation(const Model& model, const Config& cfg, const Vocab& vocab,
                                const std::vector<fs::path>& sequences) {
  const auto topt = TrackOptions::from(cfg);
  TwinSummary s;
  std::size_t frames = 0, correct = 0, flipped = 0;
  for (const auto& dir : sequences) {
    const auto rec = read_lasot_format(dir);
    if (!rec.has_twin()) continue;
    const auto seq = LoadedSequence::load(rec);
    const auto init = rec.boxes.front();
    const auto own = track_sequence(model, seq.frames, init, tokenize(rec.prompt, vocab, model.cfg.text_len), topt);
    const auto swapped =
        track_sequence(model, seq.frames, init, tokenize(rec.twin_prompt, vocab, model.cfg.text_len), topt);
    TwinOutcome o;
    o.id = rec.id;
    for (std::size_t t = 1; t < rec.boxes.size(); ++t) {
      ++o.frames;
      o.follows_prompted += nearer_object(own[t], rec.boxes[t], rec.twin_boxes[t]) == 0;
      o.follows_twin += nearer_object(swapped[t], rec.boxes[t], rec.twin_boxes[t]) == 1;
    }
    frames += o.frames;
    correct += o.follows_prompted;
    flipped += o.follows_twin;
    s.sequences.push_back(o);
  }
  if (frames > 0) {
    s.correct_rate = double(correct) / double(frames);
    s.flip_rate = double(flipped) / double(frames);
  }
  return s;
}

std::string format_boxes(const std::vector<BBox>& boxes) {
  std::string out;
  char buf[128];
  for (const auto& b : boxes) {
    std::snprintf(buf, sizeof buf, "%.3f,%.3f,%.3f,%.3f\n", b.x0(), b.y0(), b.w, b.h);
    out += buf;
  }
  return out;
}

EvalResult evaluate(const EvalArgs& args, std::ostream& log) {
  std::optional<LoadedModel> lm;
  Config cfg = args.cfg;
  if (!args.oracle_gt) {
    if (!args.checkpoint) throw ConfigError("eval needs --checkpoint (or --oracle-gt)");
    lm.emplace(load_model(*args.checkpoint, args.overrides));
    cfg = lm->cfg;
  } else {
    apply_overrides(cfg, args.overrides);
  }
  auto dirs = list_sequences(cfg.get("data_root"), split_prefixes(cfg.get("eval_split")));
  if (const auto limit = std::size_t(cfg.get_int("eval_limit")); limit && dirs.size() > limit) dirs.resize(limit);
  if (dirs.empty()) throw IoError("no evaluation sequences under " + cfg.get("data_root"));

  std::optional<Vocab> vocab;
  if (lm) vocab = checked_vocab(cfg, lm->checkpoint);
  const auto mode = parse_prompt_mode(cfg.get("eval_prompt"));
  const auto topt = TrackOptions::from(cfg);

  std::vector<SequenceMetrics> rows;
  std::vector<std::pair<std::string, std::string>> predictions;
  for (const auto& dir : dirs) {
    const auto rec = read_lasot_format(dir);
    std::vector<BBox> pred = rec.boxes;
    if (lm) pred = track_sequence(lm->model, LoadedSequence::load(rec), *vocab, prompt_for(rec, mode), topt);
    auto m = compute_metrics(pred, rec.boxes);
    m.id = rec.id;
    log << rec.id << " AUC=" << m.AUC << " P=" << m.P << " ACC=" << m.ACC << '\n';
    rows.push_back(std::move(m));
    predictions.emplace_back(rec.id, format_boxes(pred));
  }
  EvalResult r;
  r.report = aggregate(std::move(rows));
  if (lm) {
    auto twins = twin_disambiguation(lm->model, cfg, *vocab, dirs);
    if (!twins.sequences.empty()) r.twins = std::move(twins);
  }
  const auto& a = r.report.average;
  log << "average P=" << a.P << " P_norm=" << a.P_norm << " AUC=" << a.AUC << " cAUC=" << a.cAUC << " ACC=" << a.ACC
      << '\n';
  if (r.twins) log << "twins correct=" << r.twins->correct_rate << " flipped=" << r.twins->flip_rate << '\n';

  if (args.out) {
    write_report(r.report, *args.out);
    fs::create_directories(*args.out / "boxes");
    for (const auto& [id, text] : predictions) write_file(*args.out / "boxes" / (id + ".txt"), text);
    if (r.twins) {
      nlohmann::ordered_json j;
      j["correct_rate"] = r.twins->correct_rate;
      j["flip_rate"] = r.twins->flip_rate;
      auto& seqs = j["sequences"] = nlohmann::ordered_json::array();
      for (const auto& o : r.twins->sequences)
        seqs.push_back({{"id", o.id}, {"frames", o.frames}, {"follows_prompted", o.follows_prompted},
                        {"follows_twin", o.follows_twin}});
      write_file(*args.out / "twins.json", j.dump(2) + "\n");
    }
  }
  return r;
}

std::vector<BBox> track(const TrackArgs& args, std::ostream& log) {
  auto lm = load_model(args.checkpoint, args.overrides);
  const auto vocab = checked_vocab(lm.cfg, lm.checkpoint);
  const auto rec = read_lasot_format(args.sequence);
  const auto seq = LoadedSequence::load(rec);
  if (!args.init && rec.boxes.empty()) throw ContractError("no initial box: groundtruth.txt is empty, pass --init-box");
  const auto init = args.init ? *args.init : rec.boxes.front();
  const auto prompt = args.prompt ? *args.prompt : prompt_for(rec, parse_prompt_mode(lm.cfg.get("eval_prompt")));
  log << "tracking " << rec.id << " with prompt \"" << prompt << "\"\n";
  auto boxes = track_sequence(lm.model, seq.frames, init, tokenize(prompt, vocab, lm.model.cfg.text_len),
                              TrackOptions::from(lm.cfg));
  if (args.out) write_file(*args.out, format_boxes(boxes));
  return boxes;
}

}  // namespace aio::app
