#include "aio/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

namespace aio::inline AIO_ABI {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

BBox parse_box_line(const std::string& raw, const std::string& where) {
  std::string line = raw;
  std::replace_if(line.begin(), line.end(), [](char c) { return c == ',' || c == '\t'; }, ' ');
  std::istringstream in(line);
  double v[4];
  for (auto& x : v) {
    if (!(in >> x)) throw ParseError(where + ": expected x,y,w,h, got \"" + trim(raw) + "\"");
  }
  std::string rest;
  if (in >> rest) throw ParseError(where + ": trailing data \"" + rest + "\"");
  if (!(v[2] >= 0 && v[3] >= 0)) throw ParseError(where + ": negative box size");
  return BBox::from_xywh(v[0], v[1], v[2], v[3]);
}

bool is_frame(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = char(std::tolower(c));
  return ext == ".ppm" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

SequenceRecord read_lasot_format(const std::filesystem::path& dir) {
  SequenceRecord rec;
  rec.id = dir.filename().string();
  rec.dir = dir;
  const auto img_dir = dir / "img";
  if (!std::filesystem::is_directory(img_dir)) throw IoError("missing frame directory " + img_dir.string());
  for (const auto& e : std::filesystem::directory_iterator(img_dir))
    if (e.is_regular_file() && is_frame(e.path())) rec.frames.push_back(e.path());
  std::sort(rec.frames.begin(), rec.frames.end());

  const auto gt_file = dir / "groundtruth.txt";
  std::ifstream gt(gt_file);
  if (!gt) throw IoError("cannot open " + gt_file.string());
  std::string line;
  for (std::size_t n = 1; std::getline(gt, line); ++n) {
    if (trim(line).empty()) continue;
    rec.boxes.push_back(parse_box_line(line, gt_file.string() + ":" + std::to_string(n)));
  }
  if (rec.boxes.empty()) throw ParseError(gt_file.string() + ":1: no boxes");
  if (rec.frames.size() != rec.boxes.size()) {
    throw ParseError(gt_file.string() + ": " + std::to_string(rec.boxes.size()) + " boxes for " +
                     std::to_string(rec.frames.size()) + " frames");
  }

  std::ifstream nlp(dir / "nlp.txt");
  if (nlp) {
    std::getline(nlp, line);
    rec.prompt = trim(line);
  } else {
    std::cerr << "warning: " << (dir / "nlp.txt").string() << " missing, using an empty prompt\n";
  }

  std::ifstream meta_in(dir / "meta.json");
  if (meta_in) {
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(meta_in);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError((dir / "meta.json").string() + ": " + e.what());
    }
    rec.class_name = meta.value("class_name", "");
    if (meta.contains("twin")) {
      rec.twin_prompt = meta["twin"].value("prompt", "");
      for (const auto& b : meta["twin"]["boxes"])
        rec.twin_boxes.push_back(BBox::from_xywh(b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                                                 b[3].get<double>()));
      if (rec.twin_boxes.size() != rec.boxes.size()) throw ParseError((dir / "meta.json").string() + ": twin box count");
    }
  }
  return rec;
}

std::vector<std::filesystem::path> list_sequences(const std::filesystem::path& root,
                                                  const std::vector<std::string>& prefixes) {
  if (!std::filesystem::is_directory(root)) throw IoError("dataset root " + root.string() + " does not exist");
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(root)) {
    if (!e.is_directory() || !std::filesystem::exists(e.path() / "groundtruth.txt")) continue;
    const auto name = e.path().filename().string();
    const bool keep = prefixes.empty() || std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& p) {
                        return name.rfind(p, 0) == 0;
                      });
    if (keep) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

LoadedSequence LoadedSequence::load(const SequenceRecord& rec) {
  LoadedSequence s{rec, {}};
  s.frames.reserve(rec.frames.size());
  for (const auto& f : rec.frames) s.frames.push_back(load_image(f));
  return s;
}

LoadedSequence LoadedSequence::render(const Scenario& sc) {
  sc.validate();
  LoadedSequence s{scenario_record(sc), {}};
  for (std::size_t t = 0; t < sc.frames; ++t) s.frames.push_back(render_frame(sc, t));
  return s;
}

std::vector<Real> template_crop(const Image& frame, const BBox& box, const PairConfig& cfg) {
  const double side = cfg.template_factor * std::sqrt(box.w * box.h);
  return crop_resize(frame, box.cx, box.cy, side, cfg.template_size, nullptr);
}

std::vector<Real> search_crop(const Image& frame, const BBox& around, const PairConfig& cfg, CropMeta* meta) {
  const double side = cfg.search_factor * std::sqrt(around.w * around.h);
  return crop_resize(frame, around.cx, around.cy, side, cfg.search_size, meta);
}

TrainingPair make_pair(const LoadedSequence& seq, std::size_t tf, std::size_t sf, double shift_x, double shift_y,
                       const PairConfig& cfg) {
  const auto& boxes = seq.record.boxes;
  if (tf >= boxes.size() || sf >= boxes.size()) throw ContractError("frame index out of range in make_pair");
  TrainingPair p;
  p.template_frame = tf;
  p.search_frame = sf;
  p.prompt = seq.record.prompt;
  p.template_image = template_crop(seq.frames[tf], boxes[tf], cfg);
  BBox centre = boxes[sf];
  centre.cx += shift_x * centre.w;
  centre.cy += shift_y * centre.h;
  p.search_image = search_crop(seq.frames[sf], centre, cfg, &p.search_meta);
  p.search_box = p.search_meta.to_crop(boxes[sf]);
  return p;
}

TrainingPair sample_pair(const LoadedSequence& seq, Rng& rng, const PairConfig& cfg) {
  const auto n = seq.record.boxes.size();
  if (n < 2) throw ContractError("sample_pair needs at least two frames in " + seq.record.id);
  const auto tf = rng.below(n);
  auto sf = rng.below(n - 1);
  if (sf >= tf) ++sf;
  double jx = rng.uniform(-cfg.jitter, cfg.jitter), jy = rng.uniform(-cfg.jitter, cfg.jitter);
  if (cfg.twin_centre_prob > 0 && seq.record.has_twin() && rng.uniform() < cfg.twin_centre_prob) {
    const BBox& a = seq.record.boxes[sf];
    const BBox& b = seq.record.twin_boxes[sf];
    jx += 0.5 * (b.cx - a.cx) / a.w;
    jy += 0.5 * (b.cy - a.cy) / a.h;
  }
  auto p = make_pair(seq, tf, sf, jx, jy, cfg);
  if (cfg.permute_template_channels) {
    static constexpr std::size_t kPerms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    const auto& perm = kPerms[rng.below(6)];
    const auto plane = cfg.template_size * cfg.template_size;
    std::vector<Real> src = p.template_image;
    for (std::size_t c = 0; c < 3; ++c)
      std::copy_n(src.begin() + std::ptrdiff_t(perm[c] * plane), plane, p.template_image.begin() + std::ptrdiff_t(c * plane));
  }
  return p;
}

}  // namespace aio::inline AIO_ABI
