#include "detsel/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "detsel/error.hpp"
#include "detsel/io.hpp"

namespace detsel {

namespace {

constexpr double kScoreQuantum = 1e6;  // six fractional digits
constexpr double kFeasibilityTolerance = 0.05;

double quantize(double v) { return std::round(v * kScoreQuantum) / kScoreQuantum; }

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

// Euclidean projection onto the probability simplex (sort-based).
void project_to_simplex(std::vector<double>& v) {
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  for (auto& x : v) x = std::max(x - theta, 0.0);
}

std::string constraint_name(const CalibrationSpec& spec, Label label, std::size_t row) {
  const std::size_t k = spec.num_detectors();
  if (row < k) {
    return std::string("error rate of detector '") + spec.detectors[row].name + "' on " +
           label_name(label) + " files";
  }
  return "misclassification histogram bucket " + std::to_string(row - k);
}

}  // namespace

double ScoreShape::p_extreme(Label label, bool correct) const {
  if (label == Label::kMalicious) {
    return correct ? p_extreme_malicious_correct : p_extreme_malicious_incorrect;
  }
  return correct ? p_extreme_benign_correct : p_extreme_benign_incorrect;
}

void DetectorProfile::validate() const {
  const auto fail = [&](const std::string& what) {
    throw ValidationError("detector '" + name + "': " + what);
  };
  if (name.empty()) throw ValidationError("detector with empty name");
  if (!in_unit(accuracy)) fail("accuracy must lie in [0, 1]");
  if (!in_unit(tpr)) fail("tpr must lie in [0, 1]");
  if (!in_unit(fpr)) fail("fpr must lie in [0, 1]");
  if (!(mean_time > 0.0) || !std::isfinite(mean_time)) fail("mean_time must be > 0");
  if (!(time_jitter >= 0.0)) fail("time_jitter must be >= 0");
  if (std::abs(accuracy - 0.5 * (tpr + 1.0 - fpr)) > 0.01) {
    fail("accuracy inconsistent with (tpr + 1 - fpr) / 2");
  }
  for (double p : {score_shape.p_extreme_malicious_correct, score_shape.p_extreme_malicious_incorrect,
                   score_shape.p_extreme_benign_correct, score_shape.p_extreme_benign_incorrect}) {
    if (!in_unit(p)) fail("p_extreme must lie in [0, 1]");
  }
  if (!(score_shape.endpoint_width > 0.0 && score_shape.endpoint_width < 0.5)) {
    fail("endpoint_width must lie in (0, 0.5)");
  }
}

std::vector<std::string> CalibrationSpec::detector_names() const {
  std::vector<std::string> out;
  for (const auto& d : detectors) out.push_back(d.name);
  return out;
}

std::vector<double> CalibrationSpec::mean_times() const {
  std::vector<double> out;
  for (const auto& d : detectors) out.push_back(d.mean_time);
  return out;
}

void CalibrationSpec::validate() const {
  if (detectors.empty()) throw ValidationError("calibration spec has no detectors");
  if (detectors.size() > 8) throw ValidationError("at most 8 detectors are supported");
  for (std::size_t i = 0; i < detectors.size(); ++i) {
    detectors[i].validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (detectors[i].name == detectors[j].name) {
        throw ValidationError("duplicate detector name '" + detectors[i].name + "'");
      }
    }
  }
  if (misclass_histogram.size() != detectors.size() + 1) {
    throw ValidationError("misclass_histogram needs K+1 = " + std::to_string(detectors.size() + 1) +
                          " entries");
  }
  double sum = 0.0;
  for (double h : misclass_histogram) {
    if (!(h >= 0.0)) throw ValidationError("misclass_histogram entries must be >= 0");
    sum += h;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("misclass_histogram must sum to 1");
  if (!in_unit(malicious_fraction)) throw ValidationError("malicious_fraction must lie in [0, 1]");
}

CalibrationSpec CalibrationSpec::defaults() {
  CalibrationSpec spec;
  const auto make = [](std::string name, double acc, double tpr, double fpr, double t) {
    DetectorProfile p;
    p.name = std::move(name);
    p.accuracy = acc;
    p.tpr = tpr;
    p.fpr = fpr;
    p.mean_time = t;
    return p;
  };
  spec.detectors = {
      make("manalyze", 0.8288, 0.844, 0.186, 0.75),
      make("pefile", 0.9059, 0.902, 0.090, 0.70),
      make("byte3g", 0.9489, 0.937, 0.039, 3.99),
      // 44.29 rather than 42.99 so combination time sums add up (49.73 for all four).
      make("opcode2g", 0.9550, 0.951, 0.041, 44.29),
  };
  spec.misclass_histogram = {0.7302, 0.2081, 0.0392, 0.0160, 0.0065};
  spec.n_files = 24737;
  spec.malicious_fraction = 0.5;
  return spec;
}

CalibrationSpec CalibrationSpec::from_kv(const KeyValueFile& kv) {
  CalibrationSpec spec;
  std::set<std::string> known = {"n_files", "malicious_fraction", "misclass_histogram", "detectors"};
  const auto names = kv.get_strings("detectors");
  const std::vector<std::string> fields = {
      "accuracy", "tpr", "fpr", "mean_time", "time_jitter", "p_extreme", "p_extreme.malicious_correct",
      "p_extreme.malicious_incorrect", "p_extreme.benign_correct", "p_extreme.benign_incorrect",
      "endpoint_width"};
  for (const auto& name : names) {
    for (const auto& f : fields) known.insert(name + "." + f);
  }
  kv.reject_unknown(known);

  const long long n_files = kv.get_int("n_files");
  if (n_files < 0) throw ValidationError("n_files must be >= 0");
  spec.n_files = static_cast<std::size_t>(n_files);
  spec.malicious_fraction = kv.get_double("malicious_fraction", 0.5);
  spec.misclass_histogram = kv.get_doubles("misclass_histogram");
  for (const auto& name : names) {
    DetectorProfile p;
    p.name = name;
    p.accuracy = kv.get_double(name + ".accuracy");
    p.tpr = kv.get_double(name + ".tpr");
    p.fpr = kv.get_double(name + ".fpr");
    p.mean_time = kv.get_double(name + ".mean_time");
    p.time_jitter = kv.get_double(name + ".time_jitter", 0.05);
    const double pe = kv.get_double(name + ".p_extreme", 0.8);
    auto& s = p.score_shape;
    s.p_extreme_malicious_correct = kv.get_double(name + ".p_extreme.malicious_correct", pe);
    s.p_extreme_malicious_incorrect = kv.get_double(name + ".p_extreme.malicious_incorrect", pe);
    s.p_extreme_benign_correct = kv.get_double(name + ".p_extreme.benign_correct", pe);
    s.p_extreme_benign_incorrect = kv.get_double(name + ".p_extreme.benign_incorrect", pe);
    s.endpoint_width = kv.get_double(name + ".endpoint_width", 0.02);
    spec.detectors.push_back(std::move(p));
  }
  spec.validate();
  return spec;
}

CalibrationSpec CalibrationSpec::load(const std::filesystem::path& path) {
  return from_kv(KeyValueFile::load(path));
}

std::string CalibrationSpec::to_text() const {
  std::ostringstream out;
  out << "n_files = " << n_files << "\n";
  out << "malicious_fraction = " << format_sig(malicious_fraction, 9) << "\n";
  out << "misclass_histogram = ";
  for (std::size_t i = 0; i < misclass_histogram.size(); ++i) {
    out << (i ? ", " : "") << format_sig(misclass_histogram[i], 9);
  }
  out << "\ndetectors = ";
  for (std::size_t i = 0; i < detectors.size(); ++i) out << (i ? ", " : "") << detectors[i].name;
  out << "\n";
  for (const auto& d : detectors) {
    const auto& s = d.score_shape;
    out << "\n";
    out << d.name << ".accuracy = " << format_sig(d.accuracy, 9) << "\n";
    out << d.name << ".tpr = " << format_sig(d.tpr, 9) << "\n";
    out << d.name << ".fpr = " << format_sig(d.fpr, 9) << "\n";
    out << d.name << ".mean_time = " << format_sig(d.mean_time, 9) << "\n";
    out << d.name << ".time_jitter = " << format_sig(d.time_jitter, 9) << "\n";
    out << d.name << ".p_extreme.malicious_correct = " << format_sig(s.p_extreme_malicious_correct, 9) << "\n";
    out << d.name << ".p_extreme.malicious_incorrect = " << format_sig(s.p_extreme_malicious_incorrect, 9)
        << "\n";
    out << d.name << ".p_extreme.benign_correct = " << format_sig(s.p_extreme_benign_correct, 9) << "\n";
    out << d.name << ".p_extreme.benign_incorrect = " << format_sig(s.p_extreme_benign_incorrect, 9) << "\n";
    out << d.name << ".endpoint_width = " << format_sig(s.endpoint_width, 9) << "\n";
  }
  return out.str();
}

std::vector<double> PatternMixture::induced_error_rates() const {
  std::vector<double> out(num_detectors, 0.0);
  for (std::size_t p = 0; p < weights.size(); ++p) {
    for (std::size_t d = 0; d < num_detectors; ++d) {
      if (!((p >> d) & 1U)) out[d] += weights[p];
    }
  }
  return out;
}

std::vector<double> PatternMixture::induced_histogram() const {
  std::vector<double> out(num_detectors + 1, 0.0);
  for (std::size_t p = 0; p < weights.size(); ++p) {
    const auto misses = num_detectors - static_cast<std::size_t>(std::popcount(p));
    out[misses] += weights[p];
  }
  return out;
}

PatternMixture solve_pattern_weights(const CalibrationSpec& spec, Label label) {
  spec.validate();
  const std::size_t k = spec.num_detectors();
  const std::size_t n = std::size_t{1} << k;
  const std::size_t rows = 2 * k + 1;

  // Mass conservation: the histogram's mean miss count must equal the sum
  // of per-detector error rates.
  double expected_misses = 0.0;
  double error_sum = 0.0;
  for (std::size_t m = 0; m <= k; ++m) expected_misses += static_cast<double>(m) * spec.misclass_histogram[m];
  for (const auto& d : spec.detectors) error_sum += d.error_rate(label);
  if (std::abs(expected_misses - error_sum) > kFeasibilityTolerance) {
    std::ostringstream msg;
    msg << "calibration infeasible: misclassification histogram implies " << format_fixed(expected_misses, 4)
        << " misclassifications per " << label_name(label) << " file but detector error rates sum to "
        << format_fixed(error_sum, 4);
    throw CalibrationError(msg.str());
  }

  std::vector<std::vector<double>> a(rows, std::vector<double>(n, 0.0));
  std::vector<double> b(rows, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t d = 0; d < k; ++d) {
      if (!((p >> d) & 1U)) a[d][p] = 1.0;
    }
    a[k + k - static_cast<std::size_t>(std::popcount(p))][p] = 1.0;
  }
  for (std::size_t d = 0; d < k; ++d) b[d] = spec.detectors[d].error_rate(label);
  for (std::size_t m = 0; m <= k; ++m) b[k + m] = spec.misclass_histogram[m];

  const auto residual_of = [&](const std::vector<double>& w) {
    std::vector<double> r(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      double s = -b[i];
      for (std::size_t p = 0; p < n; ++p) s += a[i][p] * w[p];
      r[i] = s;
    }
    return r;
  };
  const auto gradient_of = [&](const std::vector<double>& w) {
    const auto r = residual_of(w);
    std::vector<double> g(n, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t p = 0; p < n; ++p) g[p] += 2.0 * a[i][p] * r[i];
    }
    return g;
  };

  // Lipschitz constant of the gradient: 2 * largest eigenvalue of A^T A.
  std::vector<double> v(n, 1.0);
  double lambda = 1.0;
  for (int it = 0; it < 200; ++it) {
    std::vector<double> av(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t p = 0; p < n; ++p) av[i] += a[i][p] * v[p];
    }
    std::vector<double> atav(n, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t p = 0; p < n; ++p) atav[p] += a[i][p] * av[i];
    }
    double norm = 0.0;
    for (double x : atav) norm += x * x;
    norm = std::sqrt(norm);
    lambda = norm;
    for (std::size_t p = 0; p < n; ++p) v[p] = atav[p] / norm;
  }
  const double step = 1.0 / (2.0 * lambda * 1.01);

  // FISTA on the simplex, starting from the uniform mixture.
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  std::vector<double> y = w;
  double t = 1.0;
  for (int it = 0; it < 100000; ++it) {
    const auto g = gradient_of(y);
    std::vector<double> next(n);
    for (std::size_t p = 0; p < n; ++p) next[p] = y[p] - step * g[p];
    project_to_simplex(next);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    double delta = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      y[p] = next[p] + ((t - 1.0) / t_next) * (next[p] - w[p]);
      delta = std::max(delta, std::abs(next[p] - w[p]));
    }
    w = std::move(next);
    t = t_next;
    if (delta < 1e-15 && it > 100) break;
  }

  PatternMixture mix;
  mix.num_detectors = k;
  mix.weights = w;
  const auto r = residual_of(w);
  std::size_t worst = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    mix.residual += r[i] * r[i];
    if (std::abs(r[i]) > std::abs(r[worst])) worst = i;
  }
  mix.max_violation = std::abs(r[worst]);
  if (mix.max_violation > kFeasibilityTolerance) {
    std::ostringstream msg;
    msg << "calibration infeasible: " << constraint_name(spec, label, worst) << " target "
        << format_fixed(b[worst], 4) << ", best achievable " << format_fixed(b[worst] + r[worst], 4);
    throw CalibrationError(msg.str());
  }
  return mix;
}

double sample_score(const DetectorProfile& profile, Label label, bool correct, Rng& rng) {
  const double width = profile.score_shape.endpoint_width;
  const bool high = (label == Label::kMalicious) == correct;
  const bool extreme = rng.uniform() < profile.score_shape.p_extreme(label, correct);
  const double u = rng.uniform();
  if (high) {
    const double v = extreme ? (1.0 - width) + width * u : 0.5 + (0.5 - width) * u;
    return std::clamp(quantize(v), 0.500001, 1.0);
  }
  const double v = extreme ? width * u : width + (0.5 - width) * u;
  return std::clamp(quantize(v), 0.0, 0.5);
}

double sample_time(const DetectorProfile& profile, Rng& rng) {
  if (profile.time_jitter == 0.0) return quantize(profile.mean_time);
  const double sigma2 = std::log1p(profile.time_jitter * profile.time_jitter);
  const double mu = std::log(profile.mean_time) - 0.5 * sigma2;
  const double v = std::exp(mu + std::sqrt(sigma2) * rng.normal());
  return std::max(quantize(v), 1e-6);
}

namespace {

// Largest-remainder allocation of `total` items over `weights`.
std::vector<std::size_t> allocate(const std::vector<double>& weights, std::size_t total) {
  std::vector<std::size_t> counts(weights.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = weights[i] * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& x, const auto& y) { return x.first > y.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) {
    ++counts[remainders[i % remainders.size()].second];
  }
  return counts;
}

struct CorpusPlan {
  std::vector<Label> labels;
  std::vector<std::uint32_t> patterns;
};

CorpusPlan plan_corpus(const CalibrationSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto mix_malicious = solve_pattern_weights(spec, Label::kMalicious);
  const auto mix_benign = solve_pattern_weights(spec, Label::kBenign);

  Rng rng(seed);
  const std::size_t n = spec.n_files;
  const auto n_malicious =
      static_cast<std::size_t>(std::llround(spec.malicious_fraction * static_cast<double>(n)));
  CorpusPlan plan;
  plan.labels.assign(n, Label::kBenign);
  std::fill(plan.labels.begin(), plan.labels.begin() + static_cast<std::ptrdiff_t>(std::min(n_malicious, n)),
            Label::kMalicious);
  rng.shuffle(plan.labels);

  // Patterns are drawn without replacement from a quota-filled urn per class.
  plan.patterns.assign(n, 0);
  for (const Label label : {Label::kMalicious, Label::kBenign}) {
    const auto& mix = label == Label::kMalicious ? mix_malicious : mix_benign;
    std::vector<std::size_t> slots;
    for (std::size_t i = 0; i < n; ++i) {
      if (plan.labels[i] == label) slots.push_back(i);
    }
    const auto counts = allocate(mix.weights, slots.size());
    std::vector<std::uint32_t> urn;
    urn.reserve(slots.size());
    for (std::size_t p = 0; p < counts.size(); ++p) urn.insert(urn.end(), counts[p], static_cast<std::uint32_t>(p));
    rng.shuffle(urn);
    for (std::size_t i = 0; i < slots.size(); ++i) plan.patterns[slots[i]] = urn[i];
  }
  return plan;
}

ScoreRecord sample_record(const CalibrationSpec& spec, std::uint64_t seed, std::size_t i, Label label,
                          std::uint32_t pattern) {
  const std::size_t k = spec.num_detectors();
  ScoreRecord rec;
  rec.file_id = i;
  rec.label = label;
  rec.scores.resize(k);
  rec.times.resize(k);
  Rng rng = Rng::substream(seed, i);
  for (std::size_t d = 0; d < k; ++d) {
    const bool correct = (pattern >> d) & 1U;
    rec.scores[d] = sample_score(spec.detectors[d], label, correct, rng);
    rec.times[d] = sample_time(spec.detectors[d], rng);
  }
  return rec;
}

}  // namespace

Corpus generate_corpus(const CalibrationSpec& spec, std::uint64_t seed) {
  const auto plan = plan_corpus(spec, seed);
  Corpus corpus;
  corpus.detector_names = spec.detector_names();
  corpus.records.resize(spec.n_files);
  const auto n = static_cast<std::ptrdiff_t>(spec.n_files);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    corpus.records[idx] = sample_record(spec, seed, idx, plan.labels[idx], plan.patterns[idx]);
  }
  return corpus;
}

Corpus generate_corpus_serial(const CalibrationSpec& spec, std::uint64_t seed) {
  const auto plan = plan_corpus(spec, seed);
  Corpus corpus;
  corpus.detector_names = spec.detector_names();
  corpus.records.reserve(spec.n_files);
  for (std::size_t i = 0; i < spec.n_files; ++i) {
    corpus.records.push_back(sample_record(spec, seed, i, plan.labels[i], plan.patterns[i]));
  }
  return corpus;
}

std::string corpus_to_text(const Corpus& corpus) {
  std::string out = "file_id,label";
  for (const auto& name : corpus.detector_names) out += ",score_" + name + ",time_" + name;
  out += "\n";
  for (const auto& rec : corpus.records) {
    out += std::to_string(rec.file_id);
    out += rec.label == Label::kMalicious ? ",1" : ",0";
    for (std::size_t d = 0; d < rec.scores.size(); ++d) {
      out += ",";
      out += format_fixed(rec.scores[d], 6);
      out += ",";
      out += format_fixed(rec.times[d], 6);
    }
    out += "\n";
  }
  return out;
}

Corpus parse_corpus(std::string_view text, const std::string& origin) {
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ParseError(origin + ": missing header", 1, 1);

  Corpus corpus;
  const auto header = split(trim(lines[0]), ',');
  if (header.size() < 2 || header[0] != "file_id" || header[1] != "label" || header.size() % 2 != 0) {
    throw ParseError(origin + ": header must be file_id,label,score_<d>,time_<d>,...", 1, 1);
  }
  for (std::size_t c = 2; c < header.size(); c += 2) {
    const auto& s = header[c];
    const auto& t = header[c + 1];
    if (s.rfind("score_", 0) != 0 || t.rfind("time_", 0) != 0 || s.substr(6) != t.substr(5) || s.size() == 6) {
      throw ParseError(origin + ": malformed detector columns '" + s + "," + t + "'", 1, c + 1);
    }
    corpus.detector_names.push_back(s.substr(6));
  }
  const std::size_t k = corpus.detector_names.size();
  corpus.records.reserve(lines.size() - 1);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    const auto fields = split(trim(lines[li]), ',');
    if (fields.size() != header.size()) {
      throw ParseError(origin + ": expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no, std::min(fields.size(), header.size()) + 1);
    }
    ScoreRecord rec;
    const auto id = parse_int(fields[0]);
    if (!id || *id < 0) throw ParseError(origin + ": bad file_id", line_no, 1);
    rec.file_id = static_cast<std::uint64_t>(*id);
    if (!corpus.records.empty() && rec.file_id <= corpus.records.back().file_id) {
      throw ParseError(origin + ": file_id not strictly increasing", line_no, 1);
    }
    if (fields[1] == "1") {
      rec.label = Label::kMalicious;
    } else if (fields[1] == "0") {
      rec.label = Label::kBenign;
    } else {
      throw ParseError(origin + ": label must be 0 or 1", line_no, 2);
    }
    rec.scores.resize(k);
    rec.times.resize(k);
    for (std::size_t d = 0; d < k; ++d) {
      const std::size_t sc = 2 + 2 * d;
      const auto score = parse_double(fields[sc]);
      if (!score || !in_unit(*score)) throw ParseError(origin + ": score must be in [0,1]", line_no, sc + 1);
      const auto time = parse_double(fields[sc + 1]);
      if (!time || !(*time > 0.0) || !std::isfinite(*time)) {
        throw ParseError(origin + ": time must be > 0", line_no, sc + 2);
      }
      rec.scores[d] = *score;
      rec.times[d] = *time;
    }
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_file_atomic(path, corpus_to_text(corpus));
}

Corpus load_corpus(const std::filesystem::path& path) { return parse_corpus(read_file(path), path.string()); }

std::uint64_t corpus_checksum(const Corpus& corpus) { return fnv1a64(corpus_to_text(corpus)); }

Corpus subsample_corpus(const Corpus& corpus, std::size_t n, std::uint64_t seed) {
  if (n >= corpus.size()) return corpus;
  std::vector<std::size_t> malicious, benign;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    (corpus.records[i].label == Label::kMalicious ? malicious : benign).push_back(i);
  }
  Rng rng(seed);
  rng.shuffle(malicious);
  rng.shuffle(benign);
  const auto take_malicious = static_cast<std::size_t>(std::llround(
      static_cast<double>(n) * static_cast<double>(malicious.size()) / static_cast<double>(corpus.size())));
  std::vector<std::size_t> keep(malicious.begin(), malicious.begin() + static_cast<std::ptrdiff_t>(take_malicious));
  keep.insert(keep.end(), benign.begin(), benign.begin() + static_cast<std::ptrdiff_t>(n - take_malicious));
  std::sort(keep.begin(), keep.end());
  Corpus out;
  out.detector_names = corpus.detector_names;
  for (auto i : keep) out.records.push_back(corpus.records[i]);
  return out;
}

std::vector<std::size_t> FoldSplit::test_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldSplit::train_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] != fold) out.push_back(i);
  }
  return out;
}

FoldSplit stratified_folds(const std::vector<ScoreRecord>& records, int k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("fold count must be >= 2");
  if (records.empty()) throw ValidationError("cannot split an empty corpus");
  std::vector<std::size_t> malicious, benign;
  for (std::size_t i = 0; i < records.size(); ++i) {
    (records[i].label == Label::kMalicious ? malicious : benign).push_back(i);
  }
  const auto kk = static_cast<std::size_t>(k);
  if (kk > malicious.size() || kk > benign.size()) {
    throw ValidationError("cannot stratify into " + std::to_string(k) + " folds: " +
                          std::to_string(malicious.size()) + " malicious / " + std::to_string(benign.size()) +
                          " benign records");
  }
  Rng rng(seed);
  rng.shuffle(malicious);
  rng.shuffle(benign);
  FoldSplit split;
  split.k = k;
  split.assignments.assign(records.size(), -1);
  for (std::size_t i = 0; i < malicious.size(); ++i) split.assignments[malicious[i]] = static_cast<int>(i % kk);
  // Continue the round-robin where the malicious class stopped so fold sizes
  // differ by at most one.
  const std::size_t offset = malicious.size() % kk;
  for (std::size_t i = 0; i < benign.size(); ++i) {
    split.assignments[benign[i]] = static_cast<int>((offset + i) % kk);
  }
  return split;
}

bool is_correct(double score, Label label) { return (score > 0.5) == (label == Label::kMalicious); }

CalibrationReport calibration_report(const Corpus& corpus) {
  const std::size_t k = corpus.num_detectors();
  CalibrationReport r;
  r.names = corpus.detector_names;
  r.accuracy.assign(k, 0.0);
  r.tpr.assign(k, 0.0);
  r.fpr.assign(k, 0.0);
  r.mean_time.assign(k, 0.0);
  r.misclass_histogram.assign(k + 1, 0.0);
  std::size_t n_mal = 0, n_ben = 0;
  for (const auto& rec : corpus.records) {
    const bool mal = rec.label == Label::kMalicious;
    (mal ? n_mal : n_ben)++;
    std::size_t misses = 0;
    for (std::size_t d = 0; d < k; ++d) {
      const bool flagged = rec.scores[d] > 0.5;
      if (is_correct(rec.scores[d], rec.label)) {
        r.accuracy[d] += 1.0;
      } else {
        ++misses;
      }
      if (mal && flagged) r.tpr[d] += 1.0;
      if (!mal && flagged) r.fpr[d] += 1.0;
      r.mean_time[d] += rec.times[d];
    }
    r.misclass_histogram[misses] += 1.0;
  }
  const double n = static_cast<double>(std::max<std::size_t>(corpus.size(), 1));
  for (std::size_t d = 0; d < k; ++d) {
    r.accuracy[d] /= n;
    r.mean_time[d] /= n;
    r.tpr[d] = n_mal ? r.tpr[d] / static_cast<double>(n_mal) : 0.0;
    r.fpr[d] = n_ben ? r.fpr[d] / static_cast<double>(n_ben) : 0.0;
  }
  for (auto& h : r.misclass_histogram) h /= n;
  return r;
}

std::string format_calibration_report(const CalibrationReport& report, const CalibrationSpec& targets) {
  std::ostringstream out;
  out << "detector    accuracy(target)   tpr(target)      fpr(target)      time(target)\n";
  for (std::size_t d = 0; d < report.names.size(); ++d) {
    const DetectorProfile* t = d < targets.detectors.size() ? &targets.detectors[d] : nullptr;
    char line[256];
    std::snprintf(line, sizeof line, "%-10s  %6.2f (%6.2f)    %.3f (%.3f)    %.3f (%.3f)    %7.3f (%7.3f)\n",
                  report.names[d].c_str(), 100.0 * report.accuracy[d], t ? 100.0 * t->accuracy : 0.0,
                  report.tpr[d], t ? t->tpr : 0.0, report.fpr[d], t ? t->fpr : 0.0, report.mean_time[d],
                  t ? t->mean_time : 0.0);
    out << line;
  }
  out << "misclassified-by  share%(target%)\n";
  for (std::size_t m = 0; m < report.misclass_histogram.size(); ++m) {
    char line[128];
    const double target = m < targets.misclass_histogram.size() ? targets.misclass_histogram[m] : 0.0;
    std::snprintf(line, sizeof line, "%16zu  %6.2f (%6.2f)\n", m, 100.0 * report.misclass_histogram[m],
                  100.0 * target);
    out << line;
  }
  return out.str();
}

std::vector<std::vector<double>> complementarity_matrix(const Corpus& corpus) {
  const std::size_t k = corpus.num_detectors();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<double>> missed(k, std::vector<double>(k, 0.0));
  std::vector<double> miss_count(k, 0.0);
  for (const auto& rec : corpus.records) {
    for (std::size_t i = 0; i < k; ++i) {
      if (is_correct(rec.scores[i], rec.label)) continue;
      miss_count[i] += 1.0;
      for (std::size_t j = 0; j < k; ++j) {
        if (j != i && is_correct(rec.scores[j], rec.label)) missed[i][j] += 1.0;
      }
    }
  }
  std::vector<std::vector<double>> out(k, std::vector<double>(k, nan));
  for (std::size_t i = 0; i < k; ++i) {
    if (miss_count[i] == 0.0) continue;
    for (std::size_t j = 0; j < k; ++j) {
      if (j != i) out[i][j] = 100.0 * missed[i][j] / miss_count[i];
    }
  }
  return out;
}

}  // namespace detsel
