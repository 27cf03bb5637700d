#include "nerforge/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "nerforge/embeddings.hpp"
#include "nerforge/model.hpp"
#include "nerforge/rng.hpp"

namespace nerforge::ad {

namespace {

std::string format_coord(const GradCheckOffender& o) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s[%lld]: analytic=% .9e numeric=% .9e rel_err=%.3e",
                o.tensor.c_str(), static_cast<long long>(o.index), o.analytic, o.numeric,
                o.rel_err);
  return buf;
}

}  // namespace

std::string GradCheckReport::summary() const {
  std::string s = pass ? "PASS" : "FAIL";
  s += ": " + std::to_string(checked) + " coordinates checked, worst " + format_coord(worst);
  if (!offenders.empty()) {
    s += "\noffenders:";
    const size_t show = std::min<size_t>(offenders.size(), 10);
    for (size_t i = 0; i < show; ++i) s += "\n  " + format_coord(offenders[i]);
    if (offenders.size() > show) {
      s += "\n  ... " + std::to_string(offenders.size() - show) + " more";
    }
  }
  return s;
}

GradCheckReport grad_check(const std::vector<Param<double>*>& params, const LossBuilder& build,
                           double tol, int samples_per_tensor, uint64_t seed, double h) {
  if (samples_per_tensor < 1) {
    throw std::invalid_argument("grad_check: samples_per_tensor must be >= 1");
  }

  // One backward pass gives every analytic gradient at once.
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  {
    for (Param<double>* p : params) p->zero_grad();
    Tape<double> tape;
    Value<double> loss = build(tape);
    tape.backward(loss);
    for (Param<double>* p : params) analytic.push_back(p->grad.v);
  }

  auto loss_at = [&build]() {
    Tape<double> tape;
    return build(tape).scalar();
  };

  Rng rng = derive_rng(seed, "gradcheck");
  GradCheckReport report;
  report.pass = true;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Param<double>& p = *params[pi];
    const int64_t n = static_cast<int64_t>(p.value.v.size());
    std::vector<int64_t> coords;
    if (n <= samples_per_tensor) {
      coords.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    } else {
      // Sampling with replacement is fine; duplicates just re-check a coordinate.
      coords.reserve(static_cast<size_t>(samples_per_tensor));
      for (int i = 0; i < samples_per_tensor; ++i) {
        coords.push_back(static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n))));
      }
    }
    for (int64_t c : coords) {
      const double saved = p.value.v[static_cast<size_t>(c)];
      p.value.v[static_cast<size_t>(c)] = saved + h;
      const double plus = loss_at();
      p.value.v[static_cast<size_t>(c)] = saved - h;
      const double minus = loss_at();
      p.value.v[static_cast<size_t>(c)] = saved;

      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic[pi][static_cast<size_t>(c)];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++report.checked;
      GradCheckOffender o{p.name, c, a, numeric, rel};
      if (rel > report.worst.rel_err) report.worst = o;
      if (rel >= tol) {
        report.pass = false;
        report.offenders.push_back(std::move(o));
      }
    }
  }
  std::sort(report.offenders.begin(), report.offenders.end(),
            [](const GradCheckOffender& x, const GradCheckOffender& y) {
              return x.rel_err > y.rel_err;
            });
  return report;
}

}  // namespace nerforge::ad

namespace nerforge {

ad::GradCheckReport grad_check_toy_tagger(double tol, uint64_t seed) {
  const std::vector<std::pair<std::string, std::vector<float>>> entries = {
      {"aspirin", {0.31f, -0.12f, 0.58f, -0.44f, 0.07f}},
      {"eases", {-0.25f, 0.41f, -0.03f, 0.19f, -0.52f}},
      {"migraine", {0.14f, 0.33f, -0.61f, 0.27f, 0.48f}},
  };
  const EmbeddingStore store = EmbeddingStore::build("toy", 5, entries);

  Sentence sentence;
  sentence.tokens = {{"aspirin", "B-X"}, {"eases", "O"}, {"migraine", "B-X"}};
  const CharVocab vocab = build_char_vocab(make_dataset({sentence}));

  TaggerConfig cfg;
  cfg.word_dim = 5;
  cfg.char_emb_dim = 4;
  cfg.cnn_filters = 6;
  cfg.cnn_kernel = 3;
  cfg.case_emb_dim = 3;
  cfg.lstm_state = 4;
  cfg.dropout = 0.0;
  cfg.tags = {"B-X", "I-X", "O"};
  cfg.char_vocab_size = vocab.size();

  TaggerParams<double> params = init_params<double>(cfg, seed);
  std::vector<ad::Param<double>*> plist = params.all();

  std::vector<int> gold = {0, 2, 0};  // B-X, O, B-X
  auto build = [&](ad::Tape<double>& tape) {
    auto scores =
        forward_scores_t<double>(tape, params, cfg, vocab, sentence, store, false, nullptr);
    return tape.masked_nll(scores, gold, std::vector<uint8_t>(gold.size(), 1));
  };
  return ad::grad_check(plist, build, tol, 20, seed);
}

}  // namespace nerforge
