#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "statekit/data.hpp"
#include "statekit/training.hpp"

namespace statekit {

// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> class_names);

  std::size_t num_classes() const noexcept { return names_.size(); }
  const std::vector<std::string>& class_names() const noexcept { return names_; }

  std::uint64_t& at(std::size_t truth, std::size_t predicted);
  std::uint64_t at(std::size_t truth, std::size_t predicted) const;

  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t total() const noexcept;
  std::uint64_t trace() const noexcept;

  // Row-normalized rates; zero rows stay all zero.
  std::vector<std::vector<double>> row_normalized() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth,
                                 std::span<const std::size_t> predicted,
                                 std::vector<std::string> class_names);

struct Accuracies {
  double overall;
  // Empty for classes without samples; those are excluded from mean_per_class.
  std::vector<std::optional<double>> per_class;
  double mean_per_class;
};

Accuracies accuracies(const ConfusionMatrix& cm);

struct MisclassifiedCell {
  std::size_t truth;
  std::size_t predicted;
  std::uint64_t count;
  double rate;  // count / row sum
  std::vector<std::string> example_paths;
};

// Non-empty off-diagonal cells by descending rate (ties: larger count, then
// row-major position), each with up to `top_n` offending paths in input order.
std::vector<MisclassifiedCell> misclassification_report(const ConfusionMatrix& cm,
                                                        std::span<const std::string> paths,
                                                        std::span<const std::size_t> truth,
                                                        std::span<const std::size_t> predicted,
                                                        std::size_t top_n);

std::string confusion_matrix_csv(const ConfusionMatrix& cm);
ConfusionMatrix parse_confusion_matrix_csv(std::string_view text);

std::string loss_curve_svg(std::span<const EpochRecord> records);
std::string accuracy_curve_svg(std::span<const EpochRecord> records);
std::string confusion_heatmap_svg(const ConfusionMatrix& cm, std::string_view title);

struct PlotFiles {
  std::vector<std::filesystem::path> written;
};

// Writes loss.svg, accuracy.svg, confusion_matrix.svg, metrics.csv and
// confusion_matrix.csv into `out_dir`. Empty `records` is a DataError.
PlotFiles emit_plots(std::span<const EpochRecord> records, const ConfusionMatrix& cm,
                     const std::filesystem::path& out_dir);

// Only the confusion matrix artifacts (evaluate has no epoch records).
PlotFiles emit_confusion_artifacts(const ConfusionMatrix& cm, const std::filesystem::path& out_dir,
                                   std::string_view title);

}  // namespace statekit
