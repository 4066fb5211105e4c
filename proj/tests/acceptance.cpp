// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "medfocus/encoders/model.hpp"
#include "medfocus/fewshot/manifest.hpp"
#include "medfocus/fewshot/split.hpp"
#include "medfocus/fewshot/synthetic.hpp"
#include "medfocus/fusion/heads.hpp"
#include "medfocus/numerics/archive.hpp"
#include "medfocus/numerics/rng.hpp"
#include "medfocus/segmenter/segment.hpp"
#include "medfocus/train_eval/probe.hpp"
#include "medfocus/train_eval/train.hpp"

#ifndef MEDFOCUS_CLI
#error "MEDFOCUS_CLI must name the medfocus executable"
#endif

namespace fs = std::filesystem;
using namespace medfocus;
using nlohmann::json;

namespace {

fs::path g_work;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct RunResult {
  int status = -1;
  std::string out;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + MEDFOCUS_CLI + "\" " + args + " 2>/dev/null";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

json last_json_line(const std::string& out) {
  std::istringstream in(out);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  return json::parse(last);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

// Relative path -> contents for every regular file below root.
std::map<std::string, std::vector<std::uint8_t>> snapshot(const fs::path& root) {
  std::map<std::string, std::vector<std::uint8_t>> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_file_bytes(e.path());
  return files;
}

// ---------------------------------------------------------------- 1

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  const RunResult r = run_cli("gradcheck");
  const double secs = seconds_since(t0);
  if (r.status != 0) return {false, "gradcheck exited " + std::to_string(r.status)};
  const double err = last_json_line(r.out).at("max_relative_error").get<double>();
  return {err < 1e-4 && secs < 30.0, "max_rel_err=" + fmt(err) + " time=" + fmt(secs) + "s"};
}

// ---------------------------------------------------------------- 2

Outcome loss_endpoints() {
  ArchConfig a;
  a.vocab = default_vocab(a.num_classes);
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const ModelParams p = init_params(a, seed);
    Rng rng(seed + 100);
    std::vector<Image> images(2, Image(64, 64, 1));
    for (auto& img : images)
      for (auto& px : img.pixels) px = static_cast<std::uint8_t>(rng.below(256));
    const std::vector<std::size_t> labels{seed % 4, (seed + 1) % 4};
    const CompositeLoss one = model_loss(p, images, labels, 1.0);
    const CompositeLoss zero = model_loss(p, images, labels, 0.0);
    worst = std::max(worst, std::abs(one.total.item() - one.parts.l_contrastive));
    worst = std::max(worst, std::abs(zero.total.item() - zero.parts.l_ce));
  }
  return {worst <= 1e-12, "max_abs_diff=" + fmt(worst)};
}

// ---------------------------------------------------------------- 3

Outcome mask_identity() {
  const fs::path root = g_work / "identity_data";
  GenConfig g;
  g.per_class_train = 3;
  g.per_class_test = 2;
  const DatasetManifest m = generate_synthetic(g, root);
  const fs::path masks = g_work / "identity_masks";
  fs::create_directories(masks);
  for (const auto& s : m.samples) write_mask(masks / (s.id + ".mask.pgm"), Mask(64, 64, 1));

  const MaskSource ones{MaskMode::External, masks, 2}, none{MaskMode::None, {}, 2};
  std::vector<std::size_t> all(m.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  bool images_equal = true;
  for (auto i : all) images_equal &= prepare_image(m, i, ones) == read_image(m.image_path(i));

  TrainConfig cfg;
  cfg = bind_dataset(cfg, m);
  const ModelParams params = init_params(cfg.arch, 0);
  const Tensor fa = extract_features(params, load_images(m, all, ones).images);
  const Tensor fb = extract_features(params, load_images(m, all, none).images);
  const bool features_equal = encode_archive({{"f", fa}}) == encode_archive({{"f", fb}});
  return {images_equal && features_equal, std::string("images_bit_exact=") + (images_equal ? "yes" : "no") +
                                              " features_identical=" + (features_equal ? "yes" : "no")};
}

// ---------------------------------------------------------------- 4

// Exhaustive search over all 256 thresholds with exact rational comparison of
// the between-class variance (scaled by N^2).
int brute_force_otsu(const Histogram& h) {
  __int128 n = 0, s = 0;
  for (int v = 0; v < 256; ++v) {
    n += h[v];
    s += static_cast<__int128>(v) * h[v];
  }
  int best = -1;
  __int128 best_num = 0, best_den = 1, n0 = 0, s0 = 0;
  for (int t = 0; t < 256; ++t) {
    n0 += h[t];
    s0 += static_cast<__int128>(t) * h[t];
    const __int128 n1 = n - n0;
    if (n0 == 0 || n1 == 0) continue;
    const __int128 d = s * n0 - s0 * n;
    const __int128 num = d * d, den = n0 * n1;
    if (best < 0 || num * best_den > best_num * den) {
      best = t;
      best_num = num;
      best_den = den;
    }
  }
  return best;
}

Outcome segmenter_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(99);
  int checked = 0, agree = 0;
  while (checked < 1000) {
    Histogram h{};
    const int occupied = 2 + static_cast<int>(rng.below(60));
    for (int k = 0; k < occupied; ++k) h[rng.below(256)] += 1 + rng.below(4096);
    if (std::count_if(h.begin(), h.end(), [](auto c) { return c > 0; }) < 2) continue;
    ++checked;
    agree += otsu_threshold(h) == brute_force_otsu(h);
  }

  const DatasetManifest m = generate_synthetic(GenConfig{}, g_work / "segment_data");
  std::size_t good = 0, total = 0;
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    good += iou(segment(read_image(m.image_path(i))), load_external_mask(m.mask_path(i), 64, 64)) >= 0.8;
    ++total;
  }
  const double frac = static_cast<double>(good) / static_cast<double>(total);
  const double secs = seconds_since(t0);
  return {agree == 1000 && frac >= 0.9 && secs < 60.0, "otsu_agree=" + std::to_string(agree) + "/1000 iou>=0.8=" +
                                                           fmt(100 * frac) + "% time=" + fmt(secs) + "s"};
}

// ---------------------------------------------------------------- 5

struct Points {
  std::vector<double> x;
  std::vector<std::size_t> y;
};

Points gaussian_blobs(Rng& rng, std::size_t per_class, std::size_t classes, std::size_t dim, double sep,
                      double sigma) {
  Points p;
  for (std::size_t k = 0; k < classes; ++k)
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t j = 0; j < dim; ++j) p.x.push_back((j == k % dim ? sep : 0.0) + rng.normal(0, sigma));
      p.y.push_back(k);
    }
  return p;
}

double binary_accuracy(const Points& p, double u0, double u1, double b) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < p.y.size(); ++i) ok += ((u0 * p.x[2 * i] + u1 * p.x[2 * i + 1] + b) > 0) == (p.y[i] == 1);
  return static_cast<double>(ok) / static_cast<double>(p.y.size());
}

// Two-class softmax regression reduces to binary logistic regression in
// u = w1 - w0, b = b1 - b0 with penalty (l2 / 4)|u|^2; minimized on a grid.
std::array<double, 3> grid_search(const Points& p, double l2) {
  std::array<double, 3> best_arg{};
  double best = INFINITY;
  for (int a = 0; a < 180; ++a) {
    const double th = 2.0 * M_PI * a / 180.0;
    for (int r = 0; r <= 60; ++r)
      for (int o = -30; o <= 30; ++o) {
        const double u0 = 0.1 * r * std::cos(th), u1 = 0.1 * r * std::sin(th), b = 0.1 * o;
        double f = 0;
        for (std::size_t i = 0; i < p.y.size(); ++i) {
          const double m = u0 * p.x[2 * i] + u1 * p.x[2 * i + 1] + b;
          f += std::log1p(std::exp(p.y[i] == 1 ? -m : m));
        }
        f = f / static_cast<double>(p.y.size()) + 0.25 * l2 * (u0 * u0 + u1 * u1);
        if (f < best) {
          best = f;
          best_arg = {u0, u1, b};
        }
      }
  }
  return best_arg;
}

Outcome probe_oracle() {
  Rng rng(31);
  const Points sep = gaussian_blobs(rng, 25, 4, 6, 8.0, 0.5);
  const Tensor xs = Tensor::from({sep.y.size(), 6}, sep.x);
  const double train_acc = evaluate(logistic_probe(xs, sep.y, 4), xs, sep.y).accuracy;

  const Points tr = gaussian_blobs(rng, 100, 2, 2, 2.0, 1.0), te = gaussian_blobs(rng, 500, 2, 2, 2.0, 1.0);
  const ProbeModel p = logistic_probe(Tensor::from({200, 2}, tr.x), tr.y, 2);
  const double probe_acc = evaluate(p, Tensor::from({1000, 2}, te.x), te.y).accuracy;
  const auto g = grid_search(tr, ProbeOptions{}.l2);
  const double grid_acc = binary_accuracy(te, g[0], g[1], g[2]);
  return {train_acc == 1.0 && std::abs(probe_acc - grid_acc) <= 0.01,
          "separable_train_acc=" + fmt(train_acc) + " probe_test=" + fmt(probe_acc) + " grid_test=" + fmt(grid_acc)};
}

// ---------------------------------------------------------------- 6

Outcome headline() {
  const fs::path data = g_work / "default_data", out = g_work / "headline";
  const auto t0 = std::chrono::steady_clock::now();
  if (run_cli("gen-data --out \"" + data.string() + "\"").status != 0) return {false, "gen-data failed"};
  const RunResult r =
      run_cli("experiment --data \"" + data.string() + "\" --fractions 0.05,0.1 --seeds 0,1,2 --out \"" + out.string() + "\"");
  const double secs = seconds_since(t0);
  if (r.status != 0) return {false, "experiment exited " + std::to_string(r.status)};
  const json acc = last_json_line(r.out).at("mean_accuracy");
  const double m05 = acc.at("masked").at("0.05"), u05 = acc.at("unmasked").at("0.05");
  const double m10 = acc.at("masked").at("0.1"), u10 = acc.at("unmasked").at("0.1");
  return {m05 > u05 && m10 > u10 && secs < 900.0, "5%: masked=" + fmt(m05) + " unmasked=" + fmt(u05) +
                                                      " 10%: masked=" + fmt(m10) + " unmasked=" + fmt(u10) +
                                                      " time=" + fmt(secs) + "s"};
}

// ---------------------------------------------------------------- 7

Outcome determinism() {
  const fs::path base = g_work / "determinism";
  const fs::path cfg = base / "config.json";
  fs::create_directories(base);
  write_text_file(cfg, R"({"epochs": 2})");

  const fs::path d = base / "run";
  auto pipeline = [&] {
    fs::remove_all(d);
    const std::string data = (d / "data").string();
    bool ok = run_cli("gen-data --out \"" + data + "\" --per-class 10 --per-class-test 5 --seed 3").status == 0;
    ok &= run_cli("segment --data \"" + data + "\" --out \"" + (d / "masks").string() + "\"").status == 0;
    const std::string common = " --data \"" + data + "\" --masks \"" + (d / "masks").string() + "\"";
    ok &= run_cli("train" + common + " --config \"" + cfg.string() + "\" --fraction 0.5 --seed 4 --out \"" +
                  (d / "run").string() + "\"").status == 0;
    const std::string ckpt = " --ckpt \"" + (d / "run" / "checkpoint.mfc").string() + "\"";
    ok &= run_cli("probe" + ckpt + common + " --fraction 0.5 --seed 4 --out \"" + (d / "probe").string() + "\"").status == 0;
    ok &= run_cli("eval" + ckpt + common + " --probe \"" + (d / "probe" / "probe.mfc").string() + "\" --out \"" +
                  (d / "eval").string() + "\"").status == 0;
    ok &= run_cli("experiment --data \"" + data + "\" --config \"" + cfg.string() +
                  "\" --fractions 0.2,0.5 --seeds 0,1 --jobs 2 --out \"" + (d / "report").string() + "\"").status == 0;
    return ok;
  };
  if (!pipeline()) return {false, "a CLI invocation failed"};
  const auto a = snapshot(d);
  if (!pipeline()) return {false, "a repeated CLI invocation failed"};
  const auto b = snapshot(d);
  std::size_t differing = 0;
  for (const auto& [name, bytes] : a) differing += !b.contains(name) || b.at(name) != bytes;
  differing += b.size() > a.size() ? b.size() - a.size() : 0;
  const bool has_all = a.contains("run/checkpoint.mfc") && a.contains("probe/train_features.mfc") &&
                       a.contains("eval/test_features.mfc") && a.contains("report/report.json");
  return {differing == 0 && has_all, "files_compared=" + std::to_string(a.size()) +
                                         " differing=" + std::to_string(differing)};
}

// ---------------------------------------------------------------- 8

DatasetManifest manifest_with_class_sizes(const std::vector<std::size_t>& sizes) {
  DatasetManifest m;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    m.classes.push_back("class" + std::to_string(c));
    for (std::size_t i = 0; i < sizes[c]; ++i) {
      SampleRecord s;
      s.id = "c" + std::to_string(c) + "_" + std::to_string(i);
      s.label = c;
      s.role = Role::Train;
      m.samples.push_back(s);
    }
  }
  return m;
}

Outcome fewshot_protocol() {
  const std::vector<std::size_t> sizes{100, 37, 3, 20, 1, 250};
  const DatasetManifest m = manifest_with_class_sizes(sizes);
  const std::vector<double> fractions{0.05, 0.1, 0.2, 0.5, 1.0};
  std::size_t checks = 0, failures = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::vector<std::size_t> previous;
    for (double f : fractions) {
      const SplitManifest s = stratified_fraction_split(m, f, seed);
      for (std::size_t c = 0; c < sizes.size(); ++c) {
        const auto want = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(f * sizes[c])));
        ++checks;
        failures += s.per_class[c].size() != want;
        for (auto i : s.per_class[c]) failures += m.samples[i].label != c;
      }
      const auto cur = s.indices();
      for (auto i : previous) failures += std::find(cur.begin(), cur.end(), i) == cur.end();
      previous = cur;
    }
  }
  return {failures == 0, "count_checks=" + std::to_string(checks) + " failures=" + std::to_string(failures)};
}

}  // namespace

int main() {
  g_work = fs::temp_directory_path() / "medfocus_acceptance";
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 gradient correctness", gradient_correctness},
      {"2 composite-loss endpoints", loss_endpoints},
      {"3 mask identity chain", mask_identity},
      {"4 segmenter oracle equivalence", segmenter_oracle},
      {"5 probe oracle", probe_oracle},
      {"6 masked beats unmasked", headline},
      {"7 determinism", determinism},
      {"8 few-shot protocol", fewshot_protocol},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << name << "]  " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
