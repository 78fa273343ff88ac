// One line per acceptance criterion; exit status 1 if any fails.
// Usage: acceptance [criterion numbers...]   (default: all)

#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "vlm/app/commands.hpp"
#include "vlm/io/binary.hpp"
#include "vlm/masking/attention_mask.hpp"
#include "vlm/masking/mask_plan.hpp"
#include "vlm/model/encoder.hpp"
#include "vlm/model/params.hpp"
#include "vlm/objectives/losses.hpp"
#include "vlm/tasks/caption.hpp"
#include "vlm/tasks/metrics.hpp"
#include "vlm/tasks/segmentation.hpp"
#include "vlm/training/finetune.hpp"
#include "vlm/training/pretrain.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

using namespace vlm;
using namespace vlm::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double scalar(const Var<double>& v) { return v.value()(0, 0); }

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("vlm_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

// 1. Finite differences on the whole pretraining graph.
Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig model = tiny_config();
  model.init_std = 0.3;
  auto videos = generate_corpus(3, 11, corpus_for(model));
  auto clips = sample_pairs(videos, 2, 11);
  MaskingConfig masking;
  masking.p_token = 0.3;
  std::mt19937_64 rng(11);
  const PretrainBatch batch = make_batch(clips, model, masking, rng);
  auto build = [&](Tape<double>& tape, const TensorMap<double>& params) {
    BoundModel<double> bound(model, params, tape);
    return pretrain_loss(bound, batch, PretrainLossOptions{}).loss;
  };
  const GradCheckResult r = gradcheck(build, init_params(model, 3), 100, 17);
  const double secs = seconds_since(t0);
  return {r.max_rel_error < 1e-4 && secs < 120.0,
          fmt("max rel error %.2e over %zu probes, %.1fs", r.max_rel_error, r.probes, secs)};
}

// 2. Scheme frequencies and per-position rate over 10,000 plans.
Outcome mask_statistics() {
  const ModelConfig model = ModelConfig::desk();
  const std::vector<int> text(12, model.tokens.first_regular_id);
  const SequenceLayout layout = assemble_layout(8, text, model, model.max_len);
  std::mt19937_64 rng(2024);
  const int draws = 10000;
  int video = 0, txt = 0;
  double masked = 0.0, positions = 0.0;
  for (int k = 0; k < draws; ++k) {
    const MaskPlan p = sample_mask_plan(layout, rng, MaskingConfig{}, model);
    video += p.scheme == MaskScheme::mmm_video;
    txt += p.scheme == MaskScheme::mmm_text;
    if (p.scheme != MaskScheme::mfm_mlm) continue;
    for (std::size_t i = 0; i < layout.padded_length(); ++i) {
      if (layout.kinds[i] != TokenKind::video && layout.kinds[i] != TokenKind::text) continue;
      masked += p.actions[i] != MaskAction::keep;
      positions += 1.0;
    }
  }
  const double fv = video / double(draws), ft = txt / double(draws), rate = masked / positions;
  const double band = 3.0 * std::sqrt(0.15 * 0.85 / positions);
  const auto in = [](double f) { return f >= 0.237 && f <= 0.263; };
  return {in(fv) && in(ft) && std::abs(rate - 0.15) <= band,
          fmt("MMM_VIDEO %.4f, MMM_TEXT %.4f, token rate %.4f (band +-%.4f)", fv, ft, rate, band)};
}

MatrixXr random_tokens(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng) { return random_matrix(n, d, rng); }

std::vector<int> random_words(std::size_t n, std::mt19937_64& rng, const ModelConfig& c) {
  std::uniform_int_distribution<int> w(c.tokens.first_regular_id, static_cast<int>(c.vocab_size) - 1);
  std::vector<int> out(n);
  for (int& x : out) x = w(rng);
  return out;
}

bool rows_identical(const MatrixXr& a, const MatrixXr& b, std::size_t from, std::size_t to) {
  for (std::size_t r = from; r <= to; ++r) {
    if (!(a.row(Eigen::Index(r)).array() == b.row(Eigen::Index(r)).array()).all()) return false;
  }
  return true;
}

// 3. Isolated blocks do not see each other, exactly.
Outcome isolation() {
  const ModelConfig c = ModelConfig::desk();
  const auto params = init_params(c, 21);
  std::mt19937_64 rng(22);
  const auto d = static_cast<Eigen::Index>(c.d_model);
  const MatrixXr video = random_tokens(6, d, rng);
  const auto text = random_words(9, rng, c);
  const MultimodalSequence base = assemble_sequence(video, text, c, c.max_len);
  const BoolMatrix mask = build_isolated_mask(base.layout).allow;
  const MatrixXr h = encode(base, mask, params, c);
  const SequenceLayout& L = base.layout;
  int text_ok = 0, video_ok = 0;
  for (int k = 0; k < 50; ++k) {
    const MultimodalSequence pv = assemble_sequence(random_tokens(6, d, rng) * (1.0 + k), text, c, c.max_len);
    text_ok += rows_identical(h, encode(pv, mask, params, c), L.text_begin(), L.second_sep());
    const MultimodalSequence pt = assemble_sequence(video, random_words(9, rng, c), c, c.max_len);
    video_ok += rows_identical(h, encode(pt, mask, params, c), 0, L.first_sep());
  }
  return {text_ok == 50 && video_ok == 50,
          fmt("text rows identical in %d/50 video perturbations, video rows in %d/50 text perturbations", text_ok,
              video_ok)};
}

// 4. Caption logits at a position never depend on later tokens.
Outcome causality() {
  const ModelConfig c = ModelConfig::desk();
  const auto params = init_params(c, 31);
  std::mt19937_64 rng(32);
  std::uniform_int_distribution<int> frames(1, 8), words(1, 12);
  double worst = 0.0;
  std::size_t checks = 0;
  for (int s = 0; s < 20; ++s) {
    const MatrixXr f = random_matrix(frames(rng), static_cast<Eigen::Index>(c.d_video_feat), rng);
    std::size_t n = static_cast<std::size_t>(words(rng));
    n = std::min(n, c.max_len - ModelConfig::kStructuralTokens - static_cast<std::size_t>(f.rows()) - 1);
    const auto caption = random_words(n, rng, c);
    const MatrixXr full = caption_full_logits(f, caption, params, c);
    for (std::size_t j = 0; j < n; ++j) {
      auto altered = caption;
      for (std::size_t k = j; k < n; ++k) altered[k] = random_words(1, rng, c)[0];
      const MatrixXr other = caption_full_logits(f, altered, params, c);
      // Row i predicts caption[i] from [CLS] + caption[0..i-1]; rows 0..j see none of the altered tokens.
      for (std::size_t i = 0; i <= j; ++i) {
        worst = std::max(worst, (full.row(Eigen::Index(i)) - other.row(Eigen::Index(i))).cwiseAbs().maxCoeff());
        ++checks;
      }
    }
  }
  return {worst <= 1e-12, fmt("max change %.2e over %zu (sequence, position, alteration) checks", worst, checks)};
}

// -log softmax(pool . e)[positive] with explicit loops.
double pooled_nll(const RowVectorXr& e, const std::vector<RowVectorXr>& pool, std::size_t positive) {
  std::vector<double> z;
  for (const auto& c : pool) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < e.size(); ++k) s += e(k) * c(k);
    z.push_back(s);
  }
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - mx);
  return -(z[positive] - mx - std::log(sum));
}

std::vector<RowVectorXr> row_list(const MatrixXr& m) {
  std::vector<RowVectorXr> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(m.row(i));
  return out;
}

// 5. Losses, recall and window averaging against brute-force oracles.
Outcome oracles() {
  std::mt19937_64 rng(41);
  double loss_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<int> nv(1, 4), nt(1, 5), nn(1, 6), nw(3, 9), d(2, 6);
    const int V = nv(rng), T = nt(rng), N = nn(rng), W = nw(rng), D = d(rng);
    const MatrixXr vp = random_matrix(V, D, rng, 1.5), vt = random_matrix(V, D, rng, 1.5);
    const MatrixXr tp = random_matrix(T, D, rng, 1.5), neg = random_matrix(N, D, rng, 1.5);
    const MatrixXr words = random_matrix(W, D, rng, 1.5), bias = random_matrix(1, W, rng);
    std::uniform_int_distribution<int> w(0, W - 1);
    std::vector<int> ids(static_cast<std::size_t>(T));
    for (int& x : ids) x = w(rng);
    Tape<double> t;

    double mfm = 0.0;
    for (int i = 0; i < V; ++i) {
      std::vector<RowVectorXr> pool{vt.row(i)};
      for (auto& r : row_list(neg)) pool.push_back(r);
      mfm += pooled_nll(vp.row(i), pool, 0) / V;
    }
    loss_err = std::max(loss_err, std::abs(scalar(mfm_loss(t.constant(vp), t.constant(vt), t.constant(neg)).loss) - mfm));

    double mlm = 0.0;
    for (int i = 0; i < T; ++i) {
      RowVectorXr e(D + 1);
      e << tp.row(i), 1.0;
      std::vector<RowVectorXr> pool;
      for (int k = 0; k < W; ++k) {
        RowVectorXr c(D + 1);
        c << words.row(k), bias(0, k);
        pool.push_back(c);
      }
      mlm += pooled_nll(e, pool, std::size_t(ids[std::size_t(i)])) / T;
    }
    loss_err = std::max(loss_err, std::abs(scalar(mlm_loss(t.constant(tp), std::span<const int>(ids), t.constant(words),
                                                           t.constant(bias)).loss) - mlm));

    double unified = 0.0;
    for (int i = 0; i < V; ++i) {
      std::vector<RowVectorXr> pool{vt.row(i)};
      for (auto& r : row_list(neg)) pool.push_back(r);
      for (auto& r : row_list(words)) pool.push_back(r);
      unified += pooled_nll(vp.row(i), pool, 0);
    }
    for (int i = 0; i < T; ++i) {
      std::vector<RowVectorXr> pool = row_list(words);
      for (auto& r : row_list(neg)) pool.push_back(r);
      unified += pooled_nll(tp.row(i), pool, std::size_t(ids[std::size_t(i)]));
    }
    unified /= V + T;
    loss_err = std::max(loss_err, std::abs(scalar(masked_token_loss(t.constant(vp), t.constant(vt), t.constant(tp),
                                                                    std::span<const int>(ids), t.constant(neg),
                                                                    t.constant(words)).loss) - unified));

    const int B = nn(rng) + 1;
    const MatrixXr pv = random_matrix(B, D, rng), pt = random_matrix(B, D, rng);
    double retr = 0.0;
    for (int i = 0; i < B; ++i) {
      retr += pooled_nll(pt.row(i), row_list(pv), std::size_t(i)) / (2.0 * B);
      retr += pooled_nll(pv.row(i), row_list(pt), std::size_t(i)) / (2.0 * B);
    }
    loss_err = std::max(loss_err, std::abs(scalar(retrieval_contrastive_loss(t.constant(pv), t.constant(pt))) - retr));
  }

  int rank_mismatches = 0;
  std::uniform_int_distribution<int> level(0, 9);
  std::uniform_int_distribution<std::size_t> pick(0, 19);
  for (int trial = 0; trial < 100; ++trial) {
    MatrixXr sim(20, 20);
    for (Eigen::Index i = 0; i < sim.size(); ++i) sim.data()[i] = trial % 2 ? level(rng) : random_matrix(1, 1, rng)(0, 0);
    std::vector<std::size_t> gt(20);
    for (auto& g : gt) g = pick(rng);
    const RecallMetrics m = recall_metrics(sim, gt);
    for (Eigen::Index q = 0; q < 20; ++q) {
      std::vector<std::size_t> order(20);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return sim(q, Eigen::Index(a)) > sim(q, Eigen::Index(b));
      });
      const std::size_t rank = std::size_t(std::find(order.begin(), order.end(), gt[std::size_t(q)]) - order.begin()) + 1;
      rank_mismatches += rank != m.ranks[std::size_t(q)];
    }
  }

  double window_err = 0.0;
  for (std::size_t frames : {5, 20, 32, 48, 50, 77}) {
    const auto windows = window_offsets(frames, 32, 16);
    std::vector<MatrixXr> blocks;
    for (const Window& w : windows) blocks.push_back(random_matrix(Eigen::Index(w.end - w.begin), 4, rng));
    const MatrixXr avg = average_window_logits(frames, windows, blocks).logits;
    for (std::size_t f = 0; f < frames; ++f) {
      RowVectorXr sum = RowVectorXr::Zero(4);
      double n = 0.0;
      for (std::size_t k = 0; k < windows.size(); ++k) {
        if (f < windows[k].begin || f >= windows[k].end) continue;
        sum += blocks[k].row(Eigen::Index(f - windows[k].begin));
        n += 1.0;
      }
      window_err = std::max(window_err, (avg.row(Eigen::Index(f)) - sum / n).cwiseAbs().maxCoeff());
    }
  }
  return {loss_err < 1e-9 && rank_mismatches == 0 && window_err <= 1e-12,
          fmt("loss error %.2e over 50 batches, %d rank mismatches over 100 matrices, window error %.2e", loss_err,
              rank_mismatches, window_err)};
}

// 6. Masked pretraining memorizes 16 clip pairs.
Outcome toy_overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelConfig model = ModelConfig::desk();
  const auto clips = sample_pairs(generate_corpus(16, 3, corpus_for(model)), 1, 3);
  TrainingState st;
  st.params = init_params(model, 1);
  TrainerConfig tc;
  tc.steps = 2000;
  tc.schedule.base_lr = 3e-3;
  tc.schedule.warmup_steps = 50;
  tc.schedule.total_steps = tc.steps;
  pretrain(st, model, fixed_clip_batches(clips, model, MaskingConfig{}, 9), tc, {});

  // Score fresh masking draws of the same pairs with the final weights.
  const BatchSource eval = fixed_clip_batches(clips, model, MaskingConfig{}, 99);
  double loss = 0.0;
  std::size_t hits = 0, predictions = 0;
  const int batches = 50;
  for (int k = 0; k < batches; ++k) {
    Tape<double> tape;
    BoundModel<double> bound(model, st.params, tape);
    const PretrainLoss<double> l = pretrain_loss(bound, eval(k), PretrainLossOptions{});
    loss += scalar(l.loss) / batches;
    hits += l.top1_hits;
    predictions += l.predictions;
  }
  const double acc = double(hits) / double(predictions);
  const double secs = seconds_since(t0);
  return {clips.size() == 16 && loss < 0.1 && acc > 0.95 && secs < 300.0,
          fmt("%zu pairs: L_VLM %.4f, top-1 %.4f over %zu predictions, %.0fs", clips.size(), loss, acc, predictions, secs)};
}

// 7. Pretraining transfers to held-out retrieval.
Outcome retrieval_signal() {
  std::ostringstream log;
  RunConfig base;
  base.out = scratch_dir("retrieval").string();
  RunConfig pre = base;
  pre.out = (fs::path(base.out) / "pretrain").string();
  cmd_pretrain(pre, log);
  const std::string ckpt = (fs::path(pre.out) / files::checkpoint).string();

  int wins = 0;
  bool held_in_ok = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig ft = base;
    ft.seed = seed;
    ft.checkpoint = ckpt;
    ft.out = (fs::path(base.out) / ("pre-" + std::to_string(seed))).string();
    const TaskReport p = cmd_finetune(ft, log);
    RunConfig sc = ft;
    sc.checkpoint.clear();
    sc.from_scratch = true;
    sc.out = (fs::path(base.out) / ("scratch-" + std::to_string(seed))).string();
    const TaskReport s = cmd_finetune(sc, log);
    held_in_ok &= p.metrics.at("held_in.R@1") == 1.0 && p.metrics.at("held_in.MedianR") == 1.0;
    wins += s.metrics.at("held_out.R@1") < p.metrics.at("held_out.R@1");
    detail += fmt(" [seed %d in %.2f/%.0f out %.3f vs %.3f]", int(seed), p.metrics.at("held_in.R@1"),
                  p.metrics.at("held_in.MedianR"), p.metrics.at("held_out.R@1"), s.metrics.at("held_out.R@1"));
  }
  fs::remove_all(base.out);
  return {held_in_ok && wins >= 4, fmt("held-in R@1 = 1 and MedianR = 1: %s; scratch lower in %d/5 seeds;",
                                       held_in_ok ? "yes" : "no", wins) + detail};
}

// 8. Caption decoding reproduces an overfitted caption.
Outcome caption_decode() {
  const ModelConfig model = ModelConfig::desk();
  const auto videos = generate_corpus(1, 5, corpus_for(model));
  ClipSamplingConfig cfg;
  cfg.min_text_len = 8;
  cfg.max_text_len = 8;
  const auto pair = sample_pairs(videos, 1, 5, cfg);
  TrainingState st;
  st.params = init_params(model, 2);
  FinetuneConfig fc;
  fc.steps = 200;
  fc.schedule.base_lr = 3e-3;
  fc.schedule.warmup_steps = 10;
  fc.schedule.total_steps = fc.steps;
  finetune(st, model, [&](const BoundModel<double>& m, std::int64_t) { return caption_loss(m, std::span<const ClipPair>(pair)); }, fc);
  const auto decoded = greedy_decode(pair[0].frames, st.params, model, pair[0].text.size() + 2);

  const MatrixXr full = caption_full_logits(pair[0].frames, pair[0].text, st.params, model);
  double err = 0.0;
  for (std::size_t k = 0; k <= pair[0].text.size(); ++k) {
    const RowVectorXr step = caption_step_logits(pair[0].frames, std::span<const int>(pair[0].text).first(k), st.params, model);
    err = std::max(err, (step - full.row(Eigen::Index(k))).cwiseAbs().maxCoeff());
  }
  return {decoded == pair[0].text && err <= 1e-9,
          fmt("decoded %s (%zu of %zu tokens), incremental vs full %.2e", decoded == pair[0].text ? "exactly" : "wrongly",
              decoded.size(), pair[0].text.size(), err)};
}

// 9. Same seed, same bytes.
Outcome determinism() {
  std::ostringstream log;
  std::vector<std::vector<char>> bytes;
  for (const char* run : {"a", "b"}) {
    RunConfig c;
    c.steps = 100;
    c.warmup_steps = 10;
    c.checkpoint_every = 50;
    c.out = scratch_dir(std::string("determinism_") + run).string();
    cmd_pretrain(c, log);
    bytes.push_back(io::read_file((fs::path(c.out) / files::checkpoint).string()));
    fs::remove_all(c.out);
  }
  return {bytes[0] == bytes[1], fmt("checkpoints %s (%zu bytes)", bytes[0] == bytes[1] ? "byte-identical" : "differ",
                                    bytes[0].size())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient check", gradient_check}, {"mask statistics", mask_statistics}, {"isolation", isolation},
      {"causality", causality},           {"oracles", oracles},                 {"toy overfit", toy_overfit},
      {"retrieval signal", retrieval_signal}, {"caption decode", caption_decode}, {"determinism", determinism}};
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  bool all = true;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = int(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    all &= o.pass;
    std::printf("criterion %d (%s): %s: %s\n", id, criteria[k].first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
