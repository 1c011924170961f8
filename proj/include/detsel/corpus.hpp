#ifndef DETSEL_CORPUS_HPP_
#define DETSEL_CORPUS_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "detsel/rng.hpp"

namespace detsel {

class KeyValueFile;

enum class Label : std::uint8_t { kBenign = 0, kMalicious = 1 };

inline const char* label_name(Label l) { return l == Label::kMalicious ? "malicious" : "benign"; }

// Shape of a detector's conditional confidence distribution. With
// probability p_extreme the score lands within `endpoint_width` of the
// endpoint on its side of 0.5, otherwise it is uniform over the rest of
// that side.
struct ScoreShape {
  double p_extreme_malicious_correct = 0.8;
  double p_extreme_malicious_incorrect = 0.8;
  double p_extreme_benign_correct = 0.8;
  double p_extreme_benign_incorrect = 0.8;
  double endpoint_width = 0.02;

  double p_extreme(Label label, bool correct) const;
};

struct DetectorProfile {
  std::string name;
  double accuracy = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double mean_time = 0.0;  // seconds
  ScoreShape score_shape;
  double time_jitter = 0.05;  // relative standard deviation of latency

  // Probability that this detector misclassifies a file of class `label`.
  double error_rate(Label label) const { return label == Label::kMalicious ? 1.0 - tpr : fpr; }

  // Throws ValidationError on out-of-range fields or when accuracy is not
  // within 0.01 of the balanced-corpus value (tpr + 1 - fpr) / 2.
  void validate() const;
};

struct CalibrationSpec {
  std::vector<DetectorProfile> detectors;
  // Fraction of files misclassified by exactly m detectors, m = 0..K.
  std::vector<double> misclass_histogram;
  std::size_t n_files = 24737;
  double malicious_fraction = 0.5;

  std::size_t num_detectors() const { return detectors.size(); }
  std::vector<std::string> detector_names() const;
  std::vector<double> mean_times() const;
  void validate() const;

  // Four detectors calibrated to the published per-detector statistics and
  // misclassification-count histogram.
  static CalibrationSpec defaults();
  static CalibrationSpec from_kv(const KeyValueFile& kv);
  static CalibrationSpec load(const std::filesystem::path& path);
  std::string to_text() const;
};

// Mixture over the 2^K correctness patterns for one class. Bit b of a
// pattern is set iff detector b classifies the file correctly.
struct PatternMixture {
  std::size_t num_detectors = 0;
  std::vector<double> weights;
  double residual = 0.0;       // squared error of the fitted constraint system
  double max_violation = 0.0;  // largest absolute constraint violation

  std::vector<double> induced_error_rates() const;
  std::vector<double> induced_histogram() const;
};

// Fits class-conditional pattern weights to the detectors' error rates for
// `label` and to the pooled misclassification histogram, by projected
// (accelerated) gradient descent on the probability simplex. Throws
// CalibrationError when the constraints cannot be met within 0.05.
PatternMixture solve_pattern_weights(const CalibrationSpec& spec, Label label);

double sample_score(const DetectorProfile& profile, Label label, bool correct, Rng& rng);
double sample_time(const DetectorProfile& profile, Rng& rng);

struct ScoreRecord {
  std::uint64_t file_id = 0;
  Label label = Label::kBenign;
  std::vector<double> scores;
  std::vector<double> times;

  bool operator==(const ScoreRecord&) const = default;
};

struct Corpus {
  std::vector<std::string> detector_names;
  std::vector<ScoreRecord> records;

  std::size_t num_detectors() const { return detector_names.size(); }
  std::size_t size() const { return records.size(); }
  bool operator==(const Corpus&) const = default;
};

// Deterministic in (spec, seed) and independent of the OpenMP thread count:
// labels and correctness patterns are assigned from the master stream, and
// each record's scores and latencies come from a per-file substream.
Corpus generate_corpus(const CalibrationSpec& spec, std::uint64_t seed);
// Single-threaded reference of the per-record sampling kernel.
Corpus generate_corpus_serial(const CalibrationSpec& spec, std::uint64_t seed);

std::string corpus_to_text(const Corpus& corpus);
Corpus parse_corpus(std::string_view text, const std::string& origin = "<corpus>");
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

// Checksum of the canonical text form.
std::uint64_t corpus_checksum(const Corpus& corpus);

// Selects `n` records (stratified by label, deterministic in seed) keeping
// file_id order.
Corpus subsample_corpus(const Corpus& corpus, std::size_t n, std::uint64_t seed);

struct FoldSplit {
  int k = 0;
  std::vector<int> assignments;  // fold index per record position

  std::vector<std::size_t> test_indices(int fold) const;
  std::vector<std::size_t> train_indices(int fold) const;
};

FoldSplit stratified_folds(const std::vector<ScoreRecord>& records, int k, std::uint64_t seed);

// Per-detector empirical statistics of a corpus.
struct CalibrationReport {
  std::vector<std::string> names;
  std::vector<double> accuracy;  // fractions
  std::vector<double> tpr;
  std::vector<double> fpr;
  std::vector<double> mean_time;
  std::vector<double> misclass_histogram;  // fractions over 0..K
};

bool is_correct(double score, Label label);
CalibrationReport calibration_report(const Corpus& corpus);
std::string format_calibration_report(const CalibrationReport& report, const CalibrationSpec& targets);

// complementarity[i][j]: accuracy (%) of detector j on the files detector i
// misclassifies; NaN on the diagonal or when detector i makes no errors.
std::vector<std::vector<double>> complementarity_matrix(const Corpus& corpus);

}  // namespace detsel

#endif  // DETSEL_CORPUS_HPP_
