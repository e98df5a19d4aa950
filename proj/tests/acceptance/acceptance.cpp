// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: mseva-acceptance [--only N]

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "model_fixture.hpp"
#include "mseva/annotation/annotation.hpp"
#include "mseva/common/error.hpp"
#include "mseva/common/fs.hpp"
#include "mseva/eval/metrics.hpp"
#include "mseva/media/resolution.hpp"
#include "mseva/model/emotion_model.hpp"
#include "mseva/segmenter/segmenter.hpp"
#include "mseva/service/service.hpp"
#include "segmentation_fixture.hpp"

namespace fs = std::filesystem;
using namespace mseva;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// ---- 1: binary metrics on the reference confusion table ----

Outcome metrics_table() {
  const auto r = eval::metrics_from_confusion({77, 8, 27, 35});
  // acc2 from the table; F1 is 154/189 exactly
  const bool acc_ok = std::abs(r.acc2 - 0.7619) <= 0.0005;
  const bool f1_ok = r.f1 && std::abs(*r.f1 - 0.815) <= 0.0005;
  return {acc_ok && f1_ok, "acc2=" + fmt("%.5f", r.acc2) + " (0.7619+-0.0005) F1=" + fmt("%.5f", r.f1.value_or(NAN)) +
                               " (0.815+-0.0005)"};
}

// ---- 2: relative improvement ----

Outcome improvement() {
  const double v = eval::relative_improvement(74.82, 82.31);
  return {std::abs(v - 0.1001) <= 0.0001, "value=" + fmt("%.6f", v) + " (0.1001+-0.0001)"};
}

// ---- 3: segment boundaries on procedural fixtures ----

Outcome boundaries() {
  segmenter::SilenceProfile profile;
  int long_gaps = 0;
  int short_gaps = 0;
  std::vector<std::string> violations;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto f = testkit::make_segmentation_fixture(seed);
    for (const auto& [g0, g1] : f.gaps) (g1 - g0 >= 800 ? long_gaps : short_gaps)++;
    const auto segs = segmenter::segment_audio(f.audio, profile);
    for (auto& v : testkit::check_boundaries(f, segs, 800, 20)) violations.push_back("seed " + std::to_string(seed) + ": " + v);
  }
  std::string detail = "50 fixtures, " + std::to_string(long_gaps) + " gaps >= 800 ms, " + std::to_string(short_gaps) +
                       " shorter, tolerance 20 ms, violations=" + std::to_string(violations.size());
  if (!violations.empty()) detail += " first: " + violations.front();
  return {violations.empty() && long_gaps > 0 && short_gaps > 0, detail};
}

// ---- 4: compression table ----

Outcome resolution_table() {
  struct Row {
    int w0, w1, h0, h1, dw, dh;
  };
  constexpr Row kTable[] = {
      {470, 490, 550, 570, 180, 224},
      {845, 865, 470, 490, 214, 120},
      {470, 490, 840, 860, 120, 214},
      {1070, 1090, 1910, 1930, 144, 216},
  };
  const auto rules = media::default_resolution_rules();
  int exact = 0;
  int oriented = 0;
  for (const Row& r : kTable) {
    for (int w : {r.w0, r.w1}) {
      for (int h : {r.h0, r.h1}) {
        const auto sel = media::select_resolution_rule(w, h, rules);
        if (!sel.fallback && sel.dst_width == r.dw && sel.dst_height == r.dh) ++exact;
        if (media::is_portrait(w, h) == media::is_portrait(sel.dst_width, sel.dst_height)) ++oriented;
      }
    }
  }
  return {exact == 16 && oriented == 16,
          std::to_string(exact) + "/16 corners exact, " + std::to_string(oriented) + "/16 keep orientation"};
}

// ---- 5: agreement statistics ----

double fleiss_pairs(const std::vector<std::vector<int>>& rows) {
  const std::size_t k = rows[0].size();
  const int n = std::accumulate(rows[0].begin(), rows[0].end(), 0);
  double agree_sum = 0.0;
  std::vector<double> totals(k, 0.0);
  for (const auto& row : rows) {
    std::vector<std::size_t> raters;
    for (std::size_t c = 0; c < k; ++c) {
      for (int i = 0; i < row[c]; ++i) raters.push_back(c);
      totals[c] += row[c];
    }
    int agree = 0;
    for (std::size_t i = 0; i < raters.size(); ++i) {
      for (std::size_t j = 0; j < raters.size(); ++j) agree += (i != j && raters[i] == raters[j]) ? 1 : 0;
    }
    agree_sum += static_cast<double>(agree) / (n * (n - 1));
  }
  const double p_bar = agree_sum / static_cast<double>(rows.size());
  double p_e = 0.0;
  for (double t : totals) {
    const double p = t / (static_cast<double>(rows.size()) * n);
    p_e += p * p;
  }
  return (p_bar - p_e) / (1.0 - p_e);
}

Outcome kappa() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  int checked = 0;
  while (checked < 100) {
    const int items = std::uniform_int_distribution<int>(2, 40)(rng);
    const int raters = std::uniform_int_distribution<int>(2, 7)(rng);
    std::vector<std::vector<int>> rows(static_cast<std::size_t>(items), std::vector<int>(3, 0));
    for (auto& row : rows) {
      for (int r = 0; r < raters; ++r) row[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, 2)(rng))]++;
    }
    const double ref = fleiss_pairs(rows);
    if (!std::isfinite(ref)) continue;  // every vote in one category
    worst = std::max(worst, std::abs(annotation::fleiss_kappa(annotation::RatingMatrix::from_rows(rows)) - ref));
    ++checked;
  }

  std::vector<int> a(200);
  for (auto& x : a) x = std::uniform_int_distribution<int>(0, 2)(rng);
  const double self = annotation::cohen_kappa(a, a);

  std::vector<int> original(100);
  for (int i = 0; i < 100; ++i) original[static_cast<std::size_t>(i)] = i < 50 ? 0 : 1;
  auto again = original;
  for (int i : {3, 17, 60, 88}) again[static_cast<std::size_t>(i)] ^= 1;
  const double reann = annotation::cohen_kappa(original, again);

  return {worst <= 1e-12 && self == 1.0 && reann > 0.85,
          "fleiss max|diff|=" + fmt("%.2e", worst) + " over 100 matrices (<=1e-12), cohen(a,a)=" + fmt("%.3f", self) +
              ", 96% agreement kappa=" + fmt("%.4f", reann) + " (>0.85)"};
}

// ---- 6: model ----

Outcome model_checks() {
  using namespace mseva::model;
  std::ostringstream detail;
  bool ok = true;

  {
    EmotionModel m(testkit::tiny_config());
    const HashingTextBackend text(8);
    const auto data = testkit::synthetic_trimodal(m.config(), 1, 3);
    const auto g = testkit::check_model_gradient(m, m.prepare(data[1].inputs, text), data[1].label);
    ok &= g.max_relative_error < 1e-4;
    detail << "grad rel err=" << fmt("%.2e", g.max_relative_error) << " (<1e-4)";
  }

  {
    ModelConfig cfg;
    std::mt19937_64 rng(99);
    std::normal_distribution<double> n(0.0, 3.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      std::array<ModalityPrediction, kModalityCount> preds;
      for (int i = 0; i < kModalityCount; ++i) {
        auto& p = preds[static_cast<std::size_t>(i)];
        p.modality = static_cast<Modality>(i);
        for (int k = 0; k < cfg.num_classes(); ++k) p.logits.push_back(n(rng));
        p.probabilities = softmax(p.logits);
      }
      const double a = u(rng);
      const double b = u(rng) * (1.0 - a);
      const std::array<double, 3> w = {a, b, 1.0 - a - b};
      const auto fused = fuse(preds, w, cfg);
      for (std::size_t k = 0; k < fused.logits.size(); ++k) {
        double expected = 0.0;
        for (std::size_t i = 0; i < 3; ++i) expected += w[i] * preds[i].logits[k];
        worst = std::max(worst, std::abs(fused.logits[k] - expected));
      }
    }
    ok &= worst <= 1e-12;
    detail << ", fusion max|diff|=" << fmt("%.2e", worst) << " over 1000 triples (<=1e-12)";
  }

  {
    const auto start = std::chrono::steady_clock::now();
    EmotionModel m(ModelConfig{});
    const HashingTextBackend text(32);
    const auto data = testkit::synthetic_trimodal(m.config(), 5, 7);
    train(m, data, text, {10, 1, 1, 3e-3, true});
    const double acc = accuracy(m, data, text);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ok &= data.size() == 20 && acc >= 0.9 && secs < 300.0;
    detail << ", overfit acc=" << fmt("%.2f", acc) << " on " << data.size() << " in " << fmt("%.1f", secs)
           << " s (>=0.9, <300 s)";

    const auto dir = testkit::make_temp_dir("accept-ckpt");
    m.save(dir / "m.ckpt");
    const EmotionModel back = EmotionModel::load(dir / "m.ckpt");
    fs::remove_all(dir);
    bool identical = true;
    for (const auto& ex : data) {
      const auto x = m.infer_segment(ex.inputs, text);
      const auto y = back.infer_segment(ex.inputs, text);
      for (std::size_t k = 0; k < x.logits.size(); ++k) {
        identical &= std::bit_cast<std::uint64_t>(x.logits[k]) == std::bit_cast<std::uint64_t>(y.logits[k]);
      }
    }
    ok &= identical;
    detail << ", checkpoint logits " << (identical ? "bit-identical" : "DIFFER");
  }
  return {ok, detail.str()};
}

// ---- 7: deterministic CLI analysis ----

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome analyze_cli() {
  const auto dir = testkit::make_temp_dir("accept-analyze");
  const auto video = testkit::test_data_dir() / "fixture.mp4";
  std::vector<std::string> outputs;
  for (int i = 0; i < 3; ++i) {
    const auto out = dir / ("run" + std::to_string(i) + ".json");
    const std::string cmd = std::string("'") + MSEVA_BIN + "' analyze '" + video.string() + "' --out '" + out.string() + "'";
    if (run_command(cmd) != 0) {
      fs::remove_all(dir);
      return {false, "run " + std::to_string(i) + " exited non-zero"};
    }
    outputs.push_back(read_file(out));
  }
  fs::remove_all(dir);
  const bool same = outputs[0] == outputs[1] && outputs[1] == outputs[2];
  const auto track = nlohmann::json::parse(outputs[0]).at("track").size();
  return {same && track == 3, std::string("3 runs ") + (same ? "byte-identical" : "DIFFER") + ", |track|=" +
                                  std::to_string(track) + " (3 authored utterances)"};
}

// ---- 8: crash recovery ----

Outcome crash_recovery() {
  const auto dir = testkit::make_temp_dir("accept-crash");
  service::AppConfig cfg;
  cfg.service.data_dir = dir;
  cfg.media.face_fallback_to_center = true;
  const auto ctx = service::make_context(cfg);
  std::string id;
  {
    service::Service svc(ctx, false);
    id = svc.submit(read_file(testkit::test_data_dir() / "fixture.mp4"), "fixture.mp4", {});
  }

  const pid_t pid = ::fork();
  if (pid == 0) {
    ::setenv("MSEVA_FAULT_STAGE", "inferring", 1);
    service::Service svc(ctx, false);
    svc.run_job(id);
    std::_Exit(0);
  }
  int status = 0;
  ::waitpid(pid, &status, 0);
  const bool killed = WIFEXITED(status) && WEXITSTATUS(status) == 86;

  bool hidden = false;
  std::string left_state;
  {
    service::JobStore store(dir);
    left_state = service::to_string(store.get(id).state);
    try {
      store.result(id);
    } catch (const Error& e) {
      hidden = e.code() == ErrorCode::NotReady;
    }
    hidden &= fs::is_empty(dir / "results");
  }

  service::Service svc(ctx, false);
  const bool requeued = svc.job(id).state == service::JobState::Queued;
  svc.run_job(id);
  const bool done = svc.job(id).state == service::JobState::Done && svc.result(id).at("track").size() == 3;
  fs::remove_all(dir);
  return {killed && hidden && requeued && done,
          std::string("worker killed in ") + left_state + (killed ? "" : " (no kill)") +
              (hidden ? ", no partial result visible" : ", PARTIAL RESULT VISIBLE") +
              (requeued ? ", requeued on restart" : ", not requeued") + (done ? ", re-run done" : ", re-run failed")};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  if (argc == 3 && std::strcmp(argv[1], "--only") == 0) only = std::atoi(argv[2]);

  const std::vector<Criterion> criteria = {
      {1, "binary metrics from confusion table", 1, metrics_table},
      {2, "relative improvement", 1, improvement},
      {3, "segment boundaries on 50 fixtures", 30, boundaries},
      {4, "resolution table corners and orientation", 1, resolution_table},
      {5, "fleiss and cohen kappa", 10, kappa},
      {6, "model gradient, fusion, overfit, checkpoint", 300, model_checks},
      {7, "analyze CLI determinism", 120, analyze_cli},
      {8, "crash recovery", 120, crash_recovery},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = o.pass && secs < c.budget_s;
    failures += pass ? 0 : 1;
    std::printf("%s [%d] %s: %s; %.2f s (budget %.0f s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                c.budget_s);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
